import math

import numpy as np
import pytest

from xorpgd.factor_graph import (
    EnumerationCapError,
    Factor,
    FactorGraph,
    UaiParseError,
    concatenate,
    exact_expectation,
    exact_marginals,
    exact_probabilities,
    load_uai,
    log_weight_array,
    partition_function,
    to_uai,
    weight,
)

from helpers import pairwise, random_factor_graph, single_var, uniform_model


UAI_SINGLE = """MARKOV
1
2
1
1 0
2
 1 3
"""

UAI_PAIR = """MARKOV
2
2 2
1
2 0 1
4
 1 2 3 4
"""


class TestLoadUai:
    def test_single_variable(self):
        fg = load_uai(UAI_SINGLE)
        assert fg.num_vars == 1
        assert len(fg.factors) == 1
        assert np.allclose(fg.factors[0].table, [1, 3])

    def test_pairwise_scope_and_table(self):
        fg = load_uai(UAI_PAIR)
        assert fg.factors[0].scope == (0, 1)
        assert np.allclose(fg.factors[0].table, [1, 2, 3, 4])

    def test_non_binary_variable_rejected(self):
        bad = "MARKOV\n1\n3\n1\n1 0\n3\n1 1 1\n"
        with pytest.raises(UaiParseError, match="non-binary"):
            load_uai(bad)

    def test_error_carries_line_number(self):
        bad = "MARKOV\n2\n2 2\n1\n2 0 1\n4\n1 2 -3 4\n"
        with pytest.raises(UaiParseError, match="line 7"):
            load_uai(bad)

    def test_whitespace_insensitive(self):
        squashed = "MARKOV 2 2 2 1 2 0 1 4 1 2 3 4"
        fg = load_uai(squashed)
        assert partition_function(fg) == pytest.approx(10.0)

    def test_trailing_tokens_rejected(self):
        with pytest.raises(UaiParseError, match="trailing"):
            load_uai(UAI_SINGLE + "\n7\n")

    def test_roundtrip(self):
        rng = np.random.default_rng(5)
        fg = random_factor_graph(rng, 5)
        back = load_uai(to_uai(fg))
        assert back.num_vars == fg.num_vars
        assert partition_function(back) == pytest.approx(partition_function(fg))


class TestWeight:
    def test_single_factor_lookup(self):
        assert weight(single_var(1.0, 3.0), [1]) == pytest.approx(3.0)

    def test_two_independent_factors_multiply(self):
        fg = FactorGraph(2, (Factor((0,), [1.0, 3.0]), Factor((1,), [2.0, 2.0])))
        assert weight(fg, [1, 0]) == pytest.approx(6.0)

    def test_pairwise_last_variable_fastest(self):
        fg = pairwise([1.0, 2.0, 3.0, 4.0])
        assert weight(fg, [1, 1]) == pytest.approx(4.0)
        assert weight(fg, [0, 1]) == pytest.approx(2.0)
        assert weight(fg, [1, 0]) == pytest.approx(3.0)

    def test_wrong_length_rejected(self):
        with pytest.raises(ValueError):
            weight(single_var(1.0, 2.0), [1, 0])


class TestPartitionFunction:
    def test_single(self):
        assert partition_function(single_var(1.0, 3.0)) == pytest.approx(4.0)

    def test_independent_product(self):
        fg = FactorGraph(2, (Factor((0,), [1.0, 3.0]), Factor((1,), [2.0, 2.0])))
        assert partition_function(fg) == pytest.approx(16.0)

    def test_pairwise_sum(self):
        assert partition_function(pairwise([1, 2, 3, 4])) == pytest.approx(10.0)

    def test_cap_enforced(self):
        fg = uniform_model(4)
        with pytest.raises(EnumerationCapError):
            partition_function(fg, cap=3)

    def test_matches_weight_sum(self):
        rng = np.random.default_rng(11)
        for _ in range(20):
            fg = random_factor_graph(rng, int(rng.integers(1, 8)))
            total = sum(
                weight(fg, [(i >> (fg.num_vars - 1 - v)) & 1 for v in range(fg.num_vars)])
                for i in range(1 << fg.num_vars)
            )
            assert partition_function(fg) == pytest.approx(total, rel=1e-12)


class TestExactMarginals:
    def test_single(self):
        assert exact_marginals(single_var(1.0, 3.0)).marginals[0] == pytest.approx(0.75)

    def test_pairwise(self):
        res = exact_marginals(pairwise([1, 2, 3, 4]))
        assert res.marginals[0] == pytest.approx(0.7)
        assert res.partition == pytest.approx(10.0)

    def test_uniform_symmetry(self):
        res = exact_marginals(uniform_model(2))
        assert np.allclose(res.marginals, 0.5)

    def test_matches_indicator_expectation(self):
        rng = np.random.default_rng(2)
        for _ in range(10):
            fg = random_factor_graph(rng, int(rng.integers(2, 7)))
            marg = exact_marginals(fg).marginals
            for v in range(fg.num_vars):
                e = exact_expectation(fg, lambda bits, v=v: float(bits[v]))
                assert e == pytest.approx(marg[v], abs=1e-12)


class TestExactExpectation:
    def test_normalization(self):
        fg = pairwise([1, 2, 3, 4])
        assert exact_expectation(fg, lambda bits: 1.0) == pytest.approx(1.0)

    def test_indicator_equals_marginal(self):
        fg = single_var(1.0, 3.0)
        assert exact_expectation(fg, lambda b: float(b[0])) == pytest.approx(0.75)

    def test_parity(self):
        fg = pairwise([1, 2, 3, 4])
        val = exact_expectation(fg, lambda b: float(b[0] ^ b[1]))
        assert val == pytest.approx(0.5)

    def test_non_finite_h_rejected(self):
        fg = single_var(1.0, 1.0)
        with pytest.raises(ValueError, match="non-finite"):
            exact_expectation(fg, lambda b: math.inf)


class TestInvariants:
    def test_disjoint_concatenation_multiplies(self):
        rng = np.random.default_rng(9)
        for _ in range(10):
            a = random_factor_graph(rng, int(rng.integers(1, 5)))
            b = random_factor_graph(rng, int(rng.integers(1, 5)))
            both = concatenate(a, b)
            assert partition_function(both) == pytest.approx(
                partition_function(a) * partition_function(b), rel=1e-10
            )
            bits_a = [int(x) for x in rng.integers(0, 2, a.num_vars)]
            bits_b = [int(x) for x in rng.integers(0, 2, b.num_vars)]
            assert weight(both, bits_a + bits_b) == pytest.approx(
                weight(a, bits_a) * weight(b, bits_b), rel=1e-10
            )

    def test_log_space_survives_overflowing_products(self):
        # 30 stacked factors of 1e20 would overflow any linear-space product
        factors = tuple(Factor((i % 4,), [1e20, 2e20]) for i in range(30))
        fg = FactorGraph(4, factors)
        marg = exact_marginals(fg).marginals
        assert np.all(np.isfinite(marg))
        assert np.all((marg >= 0) & (marg <= 1))
        probs = exact_probabilities(fg)
        assert probs.sum() == pytest.approx(1.0)

    def test_log_weight_array_total(self):
        rng = np.random.default_rng(17)
        fg = random_factor_graph(rng, 6)
        lw = log_weight_array(fg)
        z = np.exp(lw).sum()
        assert z == pytest.approx(partition_function(fg), rel=1e-12)


class TestFactorValidation:
    def test_empty_scope_rejected(self):
        with pytest.raises(ValueError, match="nonempty"):
            Factor((), [1.0])

    def test_duplicate_scope_rejected(self):
        with pytest.raises(ValueError, match="duplicate"):
            Factor((0, 0), [1.0, 1.0, 1.0, 1.0])

    def test_wrong_table_length_rejected(self):
        with pytest.raises(ValueError, match="entries"):
            Factor((0, 1), [1.0, 2.0])

    def test_zero_entry_rejected(self):
        with pytest.raises(ValueError, match="positive"):
            Factor((0,), [0.0, 1.0])

    def test_scope_out_of_range_rejected(self):
        with pytest.raises(ValueError, match="num_vars"):
            FactorGraph(1, (Factor((1,), [1.0, 1.0]),))
