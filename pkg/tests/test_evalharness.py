import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sdlshrink.dictlearn import init_dct_dictionary
from sdlshrink.errors import ArgumentError, DegenerateError
from sdlshrink.evalharness import (
    CSV_HEADER,
    MetricsRecord,
    abs_error,
    aggregate,
    evaluate_image,
    inf_error,
    reconstruct_image,
    records_from_csv,
    records_to_csv,
    rel_error,
    stage_key,
)
from sdlshrink.patchgrid import crop, plan_grid
from sdlshrink.solvers import SolverConfig


def rec(solver="FISTA", stage="D1", image="a", re=0.1, cpu=0.5):
    return MetricsRecord(solver, stage, image, "test", re, 2 * re, 3 * re, cpu, 10 * cpu)


def test_error_examples():
    org = np.full((10, 10), 100.0)
    assert (abs_error(org, org), rel_error(org, org), inf_error(org, org)) == (0.0, 0.0, 0.0)
    assert abs_error(org, org + 1) == pytest.approx(10.0)
    assert inf_error(org, org + 1) == 1.0
    o = np.array([[3.0, 4.0]])
    assert rel_error(o, o + np.array([[3.0, 0.0]])) == pytest.approx(0.6)


def test_error_argument_checks():
    with pytest.raises(DegenerateError):
        rel_error(np.zeros((2, 2)), np.ones((2, 2)))
    with pytest.raises(ArgumentError):
        abs_error(np.zeros((2, 2)), np.zeros((2, 3)))


@settings(max_examples=30)
@given(st.integers(0, 10**6), st.floats(0.01, 100))
def test_scale_covariance(seed, s):
    rng = np.random.default_rng(seed)
    a, b = rng.uniform(1, 255, (2, 5, 5))
    assert rel_error(s * a, s * b) == pytest.approx(rel_error(a, b), rel=1e-12)
    assert abs_error(s * a, s * b) == pytest.approx(s * abs_error(a, b), rel=1e-12)
    assert inf_error(s * a, s * b) == pytest.approx(s * inf_error(a, b), rel=1e-12)


@settings(max_examples=20)
@given(st.integers(0, 10**6))
def test_norm_axioms(seed):
    rng = np.random.default_rng(seed)
    a, b, c = rng.uniform(0, 255, (3, 4, 4))
    for err in (abs_error, inf_error):
        assert err(a, a) == 0.0 and err(a, b) > 0.0
        assert err(a, c) <= err(a, b) + err(b, c) + 1e-9
        assert err(a, b) == err(b, a)


def test_complete_dct_reconstruction_is_exact():
    img = np.random.default_rng(0).uniform(0, 255, (24, 24))
    plan = plan_grid(24, 24, 6, 0.5)
    out = reconstruct_image(img, init_dct_dictionary(36, 36), SolverConfig.for_reconstruction("FISTA"), plan, mu=1e-12)
    assert out.image.shape == (24, 24)
    assert np.max(np.abs(out.image - img)) <= 1e-6


def test_zero_image_reconstructs_to_zero():
    plan = plan_grid(12, 12, 6, 0.5)
    record, out = evaluate_image(np.zeros((12, 12)), init_dct_dictionary(36, 256), SolverConfig.for_reconstruction("ISGA"),
                                 plan, stage="D0", image_id="zero")
    assert not out.image.any()
    assert (record.re_er, record.ab_er, record.in_er) == (0.0, 0.0, 0.0)


def test_reconstruct_timing_and_determinism():
    img = np.random.default_rng(1).uniform(0, 255, (13, 13))
    plan = plan_grid(13, 13, 6, 0.5)
    D = init_dct_dictionary(36, 64)
    cfg = SolverConfig.for_reconstruction("SPARSA", max_iter=200)
    a = reconstruct_image(img, D, cfg, plan, mu=1.0)
    b = reconstruct_image(img, D, cfg, plan, mu=1.0)
    assert a.image.tobytes() == b.image.tobytes()
    assert a.image.shape == (12, 12) == crop(img, plan).shape
    assert a.patch_cpu.shape == (plan.count,)
    assert a.cpu_image >= a.patch_cpu.sum()
    assert a.cpu_patch_mean == pytest.approx(a.patch_cpu.mean())


def test_reconstruct_dimension_mismatch():
    with pytest.raises(ArgumentError):
        reconstruct_image(np.zeros((12, 12)), np.eye(16), SolverConfig(), plan_grid(12, 12, 6, 0.5))


def test_aggregate_examples():
    r = rec()
    assert aggregate([r]) == [r]
    agg = aggregate([rec(re=0.2, image="a"), rec(re=0.4, image="b")])
    assert len(agg) == 1
    assert agg[0].re_er == pytest.approx(0.3)
    assert agg[0].image_id == "*"
    assert aggregate([r, r]) == [r]


def test_aggregate_groups_and_natural_order():
    records = [rec(stage=f"D{k}", image=i) for k in (10, 2, 0) for i in "ab"]
    records += [rec(solver="ISGA", stage="D2")]
    agg = aggregate(records)
    assert [(a.solver, a.dict_stage) for a in agg] == [("FISTA", "D0"), ("FISTA", "D2"), ("FISTA", "D10"), ("ISGA", "D2")]
    with pytest.raises(ArgumentError):
        aggregate([])
    with pytest.raises(ArgumentError):
        aggregate(records, by=("colour",))


def test_stage_key_natural_sort():
    assert sorted(["D10", "D2", "D1", "D0"], key=stage_key) == ["D0", "D1", "D2", "D10"]


def test_csv_roundtrip_and_format():
    records = [rec(re=0.123456789), rec(stage="D2", cpu=1.0 / 3)]
    text = records_to_csv(records)
    lines = text.splitlines()
    assert lines[0] == ",".join(CSV_HEADER)
    assert lines[1] == "FISTA,D1,a,test,0.123457,0.246914,0.37037,0.500000,5.000000"
    back = records_from_csv(text)
    assert back[1].cpu_patch_mean == pytest.approx(1 / 3, abs=1e-6)
    with pytest.raises(ArgumentError):
        records_from_csv("a,b\n")
