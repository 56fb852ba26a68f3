"""Factored grammars, the neural parameterization, kernels and checkpoints."""

from dataclasses import replace

import numpy as np
import pytest

from src.autodiff import tape as ad
from src.autodiff.tape import Tape
from src.errors import FormatError, NumericError, ShapeError
from src.grammar.core import GrammarDims, validate
from src.grammar.materialize import materialize
from src.model.checkpoint import MAGIC, load_checkpoint, save_checkpoint, save_factored
from src.model.factored import prior_masses, random_factored, validate_factors
from src.model.kernels import precompute
from src.model.neural import NeuralParams, forward, normalize, raw_scores
from src.training.optim import AdamState

DIMS = GrammarDims(m1=2, m2=2, p=3, v=4)


class TestFactored:
    def test_random_factors_are_valid(self, small_fg):
        assert validate_factors(small_fg).ok

    def test_zeroed_column_is_reported(self, small_fg):
        V1 = small_fg.V1.copy()
        V1[:, 0] = 0.0
        report = validate_factors(replace(small_fg, V1=V1))
        assert "V1.column" in report.constraints()

    def test_materialized_grammar_is_valid(self, small_fg):
        assert validate(materialize(small_fg)).ok

    def test_rank_one_uniform_entries(self):
        fg = forward(NeuralParams.zeros(DIMS, (1, 1, 1, 1), 8))
        g = materialize(fg)
        m = DIMS.m
        np.testing.assert_allclose(g.C1, 0.5 / m**2)
        np.testing.assert_allclose(g.D1, 0.5 / m / DIMS.m2)
        np.testing.assert_allclose(g.C2, 0.5 / m**2)
        np.testing.assert_allclose(g.D2, 0.5 / m / DIMS.m2 / 4)

    def test_shape_mismatch(self, small_fg):
        with pytest.raises(ShapeError):
            replace(small_fg, W3=np.ones((DIMS.m2, 2)))

    def test_prior_masses_split_rows(self, small_fg):
        masses = prior_masses(small_fg)
        np.testing.assert_allclose(masses["fanout1"], small_fg.U2.sum(axis=1).mean())
        assert 0.0 < masses["fanout2"] < 1.0

    def test_zero_parameters_split_rows_by_rank(self):
        masses = prior_masses(forward(NeuralParams.zeros(DIMS, (3, 2, 4, 1), 8)))
        assert masses["fanout1"] == pytest.approx(2 / 5, abs=1e-12)
        assert masses["fanout2"] == pytest.approx(1 / 5, abs=1e-12)

    def test_concentrated_factors_materialize_to_the_concentrated_grammar(self, concentrated_fg, concentrated):
        g = materialize(concentrated_fg)
        for name, array in concentrated.arrays().items():
            np.testing.assert_array_equal(getattr(g, name), array)


class TestNeural:
    def test_zero_parameters_give_uniform_factors(self):
        ranks = (2, 3, 2, 3)
        fg = forward(NeuralParams.zeros(DIMS, ranks, 8))
        np.testing.assert_allclose(fg.U1, 1 / 5)
        np.testing.assert_allclose(fg.U4, 1 / 5)
        np.testing.assert_allclose(fg.V1, 1 / DIMS.m)
        np.testing.assert_allclose(fg.W4, 1 / DIMS.m2)
        np.testing.assert_allclose(fg.P, 1 / 4)
        np.testing.assert_allclose(fg.s, 1 / DIMS.m1)
        np.testing.assert_allclose(fg.Q, 1 / DIMS.v)

    @pytest.mark.parametrize("dtype, tol", [("float64", 1e-9), ("float32", 1e-5)])
    def test_xavier_output_is_valid(self, dtype, tol):
        params = NeuralParams.xavier(DIMS, (3, 2, 3, 2), 16, seed=7, dtype=dtype)
        fg = forward(params)
        assert fg.dtype == np.dtype(dtype)
        assert validate_factors(fg, tol).ok

    def test_forward_is_deterministic(self, tiny_params):
        first, second = forward(tiny_params), forward(tiny_params)
        for name, array in first.arrays().items():
            np.testing.assert_array_equal(array, getattr(second, name))

    def test_emission_bias_shift_leaves_q_unchanged(self, tiny_params):
        shifted = tiny_params.copy()
        shifted.arrays["fQ.out_b"] += 3.0
        np.testing.assert_allclose(forward(shifted).Q, forward(tiny_params).Q, rtol=1e-12)

    @pytest.mark.parametrize(
        "group",
        [("U1", "U2"), ("U3", "U4"), ("V1",), ("V2",), ("V3",), ("V4",), ("W1",), ("W2",), ("W3",), ("W4",),
         ("PT",), ("s",), ("Q",)],
    )
    def test_logit_shift_leaves_factors_unchanged(self, tiny_params, group):
        def factors(shift: float):
            tape = Tape(recording=False)
            leaves = {name: tape.leaf(a, name=name) for name, a in tiny_params.arrays.items()}
            scores = raw_scores(leaves, tiny_params.dims)
            for name in group:
                scores[name] = ad.add(scores[name], tape.constant(np.full(scores[name].shape, shift)))
            return normalize(tape, scores, tiny_params.dims, tiny_params.ranks)

        base, shifted = factors(0.0), factors(2.5)
        for name, node in base.items():
            np.testing.assert_allclose(shifted[name].value, node.value, rtol=1e-12, atol=1e-15)

    def test_without_fanout_two_symbols(self):
        dims = GrammarDims(m1=2, m2=0, p=2, v=3)
        fg = forward(NeuralParams.xavier(dims, (2, 2, 2, 2), 8, seed=1, dtype="float64"))
        assert validate_factors(fg).ok
        np.testing.assert_array_equal(fg.U2, 0.0)

    def test_overflow_is_a_numeric_error(self, tiny_params):
        broken = tiny_params.copy()
        broken.arrays["fQ.out_b"][0] = np.inf
        with pytest.raises(NumericError) as err:
            forward(broken)
        assert err.value.where == "Q"

    def test_parameter_names_are_checked(self, tiny_params):
        arrays = dict(tiny_params.arrays)
        arrays.pop("root")
        with pytest.raises(ShapeError):
            NeuralParams(tiny_params.dims, tiny_params.ranks, tiny_params.d, arrays)


class TestKernels:
    def test_uniform_kernel_closed_form(self):
        ranks = (2, 2, 2, 2)
        kernels = precompute(forward(NeuralParams.zeros(DIMS, ranks, 8)))
        expected = DIMS.m1 * (1 / DIMS.m) * (1 / (ranks[0] + ranks[1]))
        np.testing.assert_allclose(kernels.F[1], expected)
        assert kernels.emit_b[1].shape == (DIMS.v, ranks[0])
        assert kernels.R1.shape == (1, ranks[0])

    def test_perturbation_bound(self, small_fg, rng):
        delta = rng.normal(scale=1e-3, size=small_fg.V1.shape)
        moved = replace(small_fg, V1=small_fg.V1 + delta)
        change = precompute(moved).F[1] - precompute(small_fg).F[1]
        m1 = small_fg.dims.m1
        bound = np.linalg.norm(delta[:m1], 2) * np.linalg.norm(small_fg.U1, 2)
        assert np.linalg.norm(change, 2) <= bound * (1 + 1e-9)

    def test_named_items(self, small_fg):
        names = [name for name, _ in precompute(small_fg).items()]
        assert {"F1", "G4", "H3", "I1", "J2", "K4", "R1", "R2", "emit_b2", "emit_c3", "log_p"} <= set(names)


class TestCheckpoint:
    def test_neural_round_trip(self, tiny_params, tmp_path):
        adam = AdamState.zeros(tiny_params)
        adam.step = 3
        adam.m["E1"] += 0.5
        path = tmp_path / "model.npm"
        save_checkpoint(path, tiny_params, vocab=["<unk>", "a"], adam=adam, meta={"epoch": 2, "best_metric": None})
        loaded = load_checkpoint(path)
        assert loaded.kind == "neural"
        assert loaded.vocab == ["<unk>", "a"]
        assert loaded.meta == {"epoch": 2, "best_metric": None}
        assert loaded.adam.step == 3
        np.testing.assert_array_equal(loaded.adam.m["E1"], adam.m["E1"])
        for name, array in tiny_params.arrays.items():
            assert loaded.params.arrays[name].dtype == np.float64
            np.testing.assert_array_equal(loaded.params.arrays[name], array)

    def test_float32_blocks_stay_float32(self, tiny_params, tmp_path):
        params = tiny_params.astype("float32")
        save_checkpoint(tmp_path / "m.npm", params)
        loaded = load_checkpoint(tmp_path / "m.npm")
        assert loaded.params.dtype == np.float32
        assert loaded.adam is None

    def test_factored_round_trip(self, small_fg, tmp_path):
        save_factored(tmp_path / "f.npm", small_fg)
        loaded = load_checkpoint(tmp_path / "f.npm")
        assert loaded.kind == "factored"
        for name, array in small_fg.arrays().items():
            np.testing.assert_array_equal(getattr(loaded.factored, name), array)

    def test_bad_magic_and_truncation(self, tiny_params, tmp_path):
        path = tmp_path / "m.npm"
        save_checkpoint(path, tiny_params)
        data = path.read_bytes()
        assert data.startswith(MAGIC)
        (tmp_path / "bad.npm").write_bytes(b"NOPE" + data[4:])
        with pytest.raises(FormatError):
            load_checkpoint(tmp_path / "bad.npm")
        (tmp_path / "short.npm").write_bytes(data[:-16])
        with pytest.raises(FormatError):
            load_checkpoint(tmp_path / "short.npm")
