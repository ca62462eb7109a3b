import numpy as np
import pytest

from tissuepheno.errors import ParseError, ValidationError
from tissuepheno.stats import cox_fit
from tissuepheno.synth import (
    CohortSpec,
    Region,
    SlideSpec,
    generate_cohort,
    generate_slide,
    load_clinical,
    write_clinical,
)


def _spec(seed=0, lam=1000.0):
    return SlideSpec("S", (1000.0, 1000.0), (
        Region((0, 0, 500, 1000), "tumor", {"M": lam, "S": lam / 2}),
        Region((500, 0, 1000, 1000), "stroma", {}),
    ), seed=seed)


def test_slide_deterministic():
    a, _ = generate_slide(_spec(3))
    b, _ = generate_slide(_spec(3))
    c, _ = generate_slide(_spec(4))
    assert a.cells == b.cells
    assert a.cells != c.cells


def test_zero_intensity_region_is_empty():
    cmap, grid = generate_slide(_spec())
    assert all(c.x <= 500 for c in cmap.cells)
    assert {c.cls for c in cmap.cells} == {"M", "S"}


def test_poisson_counts():
    # region of 0.5 mm^2 at 1000 cells/mm^2 for M: lambda = 500
    lam = 500.0
    inside = 0
    for seed in range(100):
        cmap, _ = generate_slide(_spec(seed))
        n = sum(c.cls == "M" for c in cmap.cells)
        inside += abs(n - lam) <= 4 * np.sqrt(lam)
    assert inside >= 99


def test_region_validation():
    with pytest.raises(ValidationError):
        Region((10, 0, 0, 5), "tumor", {})
    with pytest.raises(ValidationError):
        Region((0, 0, 1, 1), "bone", {})
    with pytest.raises(ValidationError):
        SlideSpec("S", (10.0, 10.0), (Region((0, 0, 20, 5), "tumor", {}),))


def test_cohort_prevalence():
    # logit(p) = -1 gives p = 0.2689
    c = generate_cohort(CohortSpec(n=5000, seed=1))
    assert c.metastasis_5yr.mean() == pytest.approx(1 / (1 + np.e), abs=0.02)


@pytest.mark.parametrize("rate", [0.1, 0.3, 0.6])
def test_censoring_rate(rate):
    c = generate_cohort(CohortSpec(n=5000, censoring_rate=rate, cox_coef=(1.0,), seed=2))
    assert 1 - c.event.mean() == pytest.approx(rate, abs=0.05)


def test_no_censoring():
    c = generate_cohort(CohortSpec(n=200, censoring_rate=0.0, seed=3))
    assert np.all(c.event == 1)


def test_cox_recovers_planted_hazard_ratio():
    c = generate_cohort(CohortSpec(n=3000, feature_kind=("binary",), cox_coef=(np.log(2),),
                                   censoring_rate=0.3, seed=4))
    fit = cox_fit(c.features, c.dmfs_time, c.event)
    assert fit.beta[0] == pytest.approx(np.log(2), abs=0.15)


def test_cohort_deterministic_and_missing():
    spec = CohortSpec(n=300, missing_rate=0.2, seed=5)
    a, b = generate_cohort(spec), generate_cohort(spec)
    assert a.differentiation == b.differentiation
    np.testing.assert_array_equal(a.dmfs_time, b.dmfs_time)
    frac = sum(v is None for v in a.differentiation) / 300
    assert 0.1 < frac < 0.3
    names, C = a.clinical_matrix()
    assert names == ["differentiation_PD", "histology_mucinous", "t_stage_pT4"]
    assert np.isnan(C[:, 0]).sum() == sum(v is None for v in a.differentiation)


def test_clinical_round_trip(tmp_path):
    c = generate_cohort(CohortSpec(n=50, missing_rate=0.2, seed=6))
    p = tmp_path / "c.csv"
    write_clinical(c, p)
    d = load_clinical(p)
    assert d.ids == c.ids
    assert d.differentiation == c.differentiation
    assert d.histological_type == c.histological_type
    np.testing.assert_array_equal(d.dmfs_time, c.dmfs_time)
    np.testing.assert_array_equal(d.metastasis_5yr, c.metastasis_5yr)


def test_clinical_merges_well_differentiated(tmp_path):
    p = tmp_path / "c.csv"
    p.write_text("slide_id,differentiation,histological_type,t_stage,metastasis_5yr,dmfs_years,event\n"
                 "A,WD,adenocarcinoma,pT3,0,5.0,0\n"
                 "B,PD,mucinous,pT4,1,,\n")
    d = load_clinical(p)
    assert d.differentiation == ["MD", "PD"]
    assert np.isnan(d.dmfs_time[1]) and np.isnan(d.event[1])


@pytest.mark.parametrize("row", [
    "A,XX,adenocarcinoma,pT3,0,5.0,0",
    "A,MD,adenocarcinoma,pT3,2,5.0,0",
    "A,MD,adenocarcinoma,pT3,0,5.0,",
    "A,MD,adenocarcinoma,pT3,0,-1,1",
])
def test_clinical_parse_errors(tmp_path, row):
    p = tmp_path / "c.csv"
    p.write_text("slide_id,differentiation,histological_type,t_stage,metastasis_5yr,dmfs_years,event\n"
                 + row + "\n")
    with pytest.raises(ParseError):
        load_clinical(p)


def test_planted_tiles_shape_and_determinism():
    from tissuepheno.synth import planted_tiles
    a = planted_tiles(n_tiles=60, n_slides=6, seed=3)
    b = planted_tiles(n_tiles=60, n_slides=6, seed=3)
    assert a.H.shape == (60, 10)
    np.testing.assert_array_equal(a.H, b.H)
    np.testing.assert_allclose(a.H.sum(axis=1), 1.0)
    assert len(set(a.slides)) == 6 and set(a.labels) <= set(range(6))
    with pytest.raises(ValidationError):
        planted_tiles(n_tiles=61, n_slides=6)
