import json

import numpy as np
import pytest

from hdiv import (
    Hypothesis,
    NetworkErrors,
    SimCell,
    SimulationCellError,
    SpatialErrors,
    noncentrality,
    null_normality_diagnostic,
    run_cell,
    run_grid,
    table1_grid,
)
from hdiv.dgp import InstrumentDesign
from hdiv.io import render_table
from hdiv.montecarlo import cell_fingerprint, replication_stream

from conftest import random_orthogonal

HYP = Hypothesis(beta0=2.0)


def small_cells():
    return [
        SimCell(ratio=0.5, rho=0.5, h=0.0, process=NetworkErrors(), n=40),
        SimCell(ratio=0.5, rho=0.5, h=2.0, process=NetworkErrors(), n=40),
        SimCell(ratio=1.0, rho=-0.9, h=0.0, process=SpatialErrors(), n=40),
    ]


class TestStreams:
    def test_fingerprint_distinguishes_cells(self):
        cells = table1_grid()
        assert len({cell_fingerprint(c) for c in cells}) == len(cells)

    def test_stream_reproducible(self):
        cell = small_cells()[0]
        a = replication_stream(7, cell, 3).standard_normal(5)
        b = replication_stream(7, cell, 3).standard_normal(5)
        np.testing.assert_array_equal(a, b)

    def test_streams_differ_across_reps(self):
        cell = small_cells()[0]
        a = replication_stream(7, cell, 0).standard_normal(5)
        b = replication_stream(7, cell, 1).standard_normal(5)
        assert not np.array_equal(a, b)


class TestRunCell:
    def test_counts_are_consistent(self):
        r = run_cell(small_cells()[0], 50, 123, HYP)
        assert 0 <= r.rejections <= r.reps
        assert r.rate == r.rejections / r.reps
        assert r.mc_std_err == pytest.approx(
            np.sqrt(r.rate * (1 - r.rate) / r.reps)
        )

    def test_deterministic(self):
        a = run_cell(small_cells()[1], 60, 9, HYP)
        b = run_cell(small_cells()[1], 60, 9, HYP)
        assert (a.rejections, a.reps) == (b.rejections, b.reps)

    def test_degenerate_cell_fails(self):
        # two orthonormal instrument rows make the trace estimator vanish
        # in every replication
        cell = SimCell(
            ratio=1.0,
            rho=0.0,
            h=0.0,
            process=NetworkErrors(gamma=0.0),
            n=2,
            design=InstrumentDesign(k=2, toeplitz_rho=0.0, factor_norms_sq=None),
        )

        class OrthonormalRows:
            def __init__(self, rng):
                self._rng = rng

            def standard_normal(self, size=None):
                if size == (2, 2):
                    return np.eye(2) * 1e6  # dominates nothing: rows orthogonal
                return self._rng.standard_normal(size)

            def __getattr__(self, name):
                return getattr(self._rng, name)

        import hdiv.montecarlo as mc

        orig = mc.replication_stream
        mc.replication_stream = lambda s, c, r: OrthonormalRows(orig(s, c, r))
        try:
            with pytest.raises(SimulationCellError):
                run_cell(cell, 20, 1, HYP)
        finally:
            mc.replication_stream = orig

    @pytest.mark.slow
    def test_baseline_null_size(self):
        # iid standard normal errors and instruments, h = 0, alpha = .05
        cell = SimCell(
            ratio=0.25,
            rho=0.0,
            h=0.0,
            process=NetworkErrors(gamma=0.0),
            n=400,
            design=InstrumentDesign(toeplitz_rho=0.0, factor_norms_sq=None, k=100),
        )
        r = run_cell(cell, 1000, 20240401, HYP)
        assert 0.035 <= r.rate <= 0.070


class TestRunGrid:
    def test_default_grid_shape(self):
        assert len(table1_grid()) == 3 * 3 * 5 * 4

    def test_serialization_deterministic(self):
        t1 = run_grid(small_cells(), 30, 5, HYP, threads=1)
        t2 = run_grid(small_cells(), 30, 5, HYP, threads=1)
        assert json.dumps(t1.to_dict()) == json.dumps(t2.to_dict())

    def test_threaded_matches_serial(self):
        t1 = run_grid(small_cells(), 30, 5, HYP, threads=1)
        t2 = run_grid(small_cells(), 30, 5, HYP, threads=4)
        assert json.dumps(t1.to_dict()) == json.dumps(t2.to_dict())

    def test_subgrid_composition(self):
        cell = small_cells()[0]
        table = run_grid([cell], 40, 11, HYP)
        alone = run_cell(cell, 40, 11, HYP)
        assert table.entries[0] == alone

    def test_markdown_render(self):
        table = run_grid(small_cells(), 10, 5, HYP)
        md = render_table(table, "markdown")
        assert "NET-E" in md and "h = 0" in md


class TestNoncentrality:
    def test_h_zero_vanishes(self, rng):
        z = rng.standard_normal((6, 3))
        nc = noncentrality(
            pi=np.ones(3), v=rng.standard_normal(6), eps=np.ones(6),
            z=z, h=0.0, trace_sigma2=2.0,
        )
        assert nc.value == 0.0
        assert nc.terms == (0.0, 0.0, 0.0)

    def test_zero_pi_and_v(self, rng):
        z = rng.standard_normal((5, 4))
        nc = noncentrality(
            pi=np.zeros(4), v=np.zeros(5), eps=rng.standard_normal(5),
            z=z, h=3.0, trace_sigma2=1.0,
        )
        assert nc.value == pytest.approx(0.0, abs=1e-14)

    def test_value_is_sum_of_terms(self, rng):
        z = rng.standard_normal((8, 5))
        nc = noncentrality(
            pi=rng.standard_normal(5), v=rng.standard_normal(8),
            eps=rng.standard_normal(8), z=z, h=1.5, trace_sigma2=4.0,
        )
        assert nc.value == sum(nc.terms)

    def test_fixed_instance_against_independent_evaluation(self):
        # frozen from a 50-digit mpmath term-by-term evaluation
        z = np.array(
            [[1, 0, 2], [0, 1, 1], [2, 1, 0], [1, 1, 1], [0, 2, 1]], dtype=float
        )
        nc = noncentrality(
            pi=np.array([1.0, 0.0, -1.0]),
            v=np.array([1.0, -1.0, 0.0, 2.0, 1.0]),
            eps=np.array([2.0, 1.0, -1.0, 1.0, 3.0]),
            z=z,
            h=2.0,
            trace_sigma2=7.0,
        )
        assert nc.terms[0] == pytest.approx(-0.537632156362164635, rel=1e-10)
        assert nc.terms[1] == pytest.approx(0.230413781298070558, rel=1e-10)
        assert nc.terms[2] == pytest.approx(1.8235559658389551, rel=1e-10)
        assert nc.value == pytest.approx(1.51633759077486102, rel=1e-10)

    def test_joint_rotation_invariance(self, rng):
        for _ in range(50):
            n, k = int(rng.integers(4, 15)), int(rng.integers(2, 12))
            z = rng.standard_normal((n, k))
            pi = rng.standard_normal(k)
            v = rng.standard_normal(n)
            eps = rng.standard_normal(n)
            o = random_orthogonal(k, rng)
            a = noncentrality(pi, v, eps, z, 1.3, 2.5)
            b = noncentrality(o.T @ pi, v, eps, z @ o, 1.3, 2.5)
            assert b.value == pytest.approx(a.value, rel=1e-8, abs=1e-8)


class TestNullNormalityDiagnostic:
    def test_deterministic(self):
        a = null_normality_diagnostic(60, 30, 120, seed=4)
        b = null_normality_diagnostic(60, 30, 120, seed=4)
        assert a["ks_statistic"] == b["ks_statistic"]

    def test_negative_control_shift(self):
        shifted = null_normality_diagnostic(100, 50, 400, seed=8, shift=1.0)
        assert shifted["p_value"] < 1e-6

    @pytest.mark.slow
    def test_null_fit(self):
        result = null_normality_diagnostic(400, 100, 2000, seed=31)
        assert result["p_value"] > 0.01
