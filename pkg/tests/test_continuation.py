import math

import numpy as np
import pytest

from antbif.continuation import (BRANCHES, CSV_COLUMNS, BranchPoint, Diagram, SweepConfig,
                                 chi_1_on_grid, continuation_sweep, detect_fold, diagram_from_csv,
                                 diagram_json, is_supercritical, normal_form_slope, swap_defect)
from antbif.dynamics import UNIFORM, Grid
from antbif.fields import Field
from antbif.model import ModelParams, ValidationError

P = ModelParams(sigma_x=0.12, sigma_theta=0.03)
CHI1 = 100.0


def synthetic(chis, slope=0.01, chi_1=CHI1, label="lane", curve=0.0):
    pts = []
    for c in chis:
        d = c - chi_1
        s2 = slope * d + curve * d * d
        if s2 <= 0:
            pts.append(BranchPoint(c, 0.0, 0.0, 0.0, -0.1, True, "uniform"))
            break
        s = math.sqrt(s2)
        pts.append(BranchPoint(c, 0.1 * s, s, 1e-12, -0.05, True, label))
    return Diagram(pts, P, label, "down", chi_1)


def test_diagram_requires_monotone_chi():
    pts = [BranchPoint(c, 1, 1, 0, -1, True, "lane") for c in (1.0, 2.0, 1.5)]
    with pytest.raises(ValidationError):
        Diagram(pts, P, "lane", "up", 1.0)


def test_csv_round_trip():
    d = synthetic(np.linspace(104, 99, 6))
    text = d.to_csv()
    assert text.splitlines()[0] == ",".join(CSV_COLUMNS)
    back = diagram_from_csv(text, P, "lane", CHI1)
    assert back.direction == "down"
    assert [p.row() for p in back.points] == [p.row() for p in d.points]
    assert back.to_csv() == text


def test_supercritical_synthetic_branch():
    d = synthetic(np.linspace(104, 99, 11))
    assert detect_fold(d) is None
    assert is_supercritical(d)
    assert normal_form_slope(d, window=0.05) == pytest.approx(0.01, rel=1e-10)
    assert normal_form_slope(synthetic(np.linspace(104, 100.5, 8), curve=1e-3), 0.05) == pytest.approx(0.01, rel=1e-8)
    m = d.manifest()
    assert m["chi_fold"] is None and m["n_points"] == len(d.points)
    assert '"branch": "lane"' in diagram_json(d)


def test_fold_detection_on_subcritical_branch():
    # amplitude grows towards smaller chi and survives below chi_1
    pts = [BranchPoint(c, 0.1, 0.3 + 0.1 * (104 - c), 1e-12, 0.01, False, "lane")
           for c in np.linspace(104, 96, 9)]
    d = Diagram(pts, P, "lane", "down", CHI1)
    assert detect_fold(d) == pytest.approx(96.0)
    assert not is_supercritical(d)


def test_supercritical_rejects_misplaced_onset():
    d = synthetic(np.linspace(104, 99, 11), chi_1=95.0)
    d.chi_1 = CHI1
    assert not is_supercritical(d)
    assert not is_supercritical(synthetic([104.0]))


def test_normal_form_slope_needs_points():
    with pytest.raises(ValidationError):
        normal_form_slope(synthetic([110.0, 109.0]), window=0.03)


def test_sweep_argument_validation():
    with pytest.raises(ValidationError):
        continuation_sweep(P, "hexagon", 1.0, 2.0)
    with pytest.raises(ValidationError):
        continuation_sweep(P, "lane", 1.0, 1.0)
    with pytest.raises(ValidationError):
        continuation_sweep(P, "lane", 1.0, 2.0, steps=1)
    assert set(BRANCHES) == {"lane", "spot", "uniform"}
    assert SweepConfig().death_amplitude == pytest.approx(1e-2)


def test_uniform_branch_changes_stability_at_chi1():
    g = Grid(16, 16, 32)
    c1 = chi_1_on_grid(P, 1, g)
    d = continuation_sweep(P, "uniform", 0.9 * c1, 1.1 * c1, 5, SweepConfig(grid=g))
    flags = [p.stable for p in d.points]
    assert flags[:2] == [True, True] and flags[3:] == [False, False]
    assert abs(d.points[2].max_re_eig) < 1e-10
    assert d.direction == "up"


@pytest.mark.slow
def test_short_lane_sweep_is_supercritical():
    g = Grid(16, 16, 32)
    cfg = SweepConfig(grid=g, eigenvalues=False)
    c1 = chi_1_on_grid(P, 1, g)
    seen = []
    d = continuation_sweep(P, "lane", 1.04 * c1, 0.98 * c1, 4, cfg,
                           progress=lambda pt, chi, msg: seen.append(chi))
    assert len(seen) == len(d.points)
    assert [p.branch_label for p in d.points] == ["lane", "lane", "uniform"]
    assert all(p.residual < 1e-8 for p in d.nontrivial())
    assert d.points[0].amplitude_mode > d.points[1].amplitude_mode
    assert is_supercritical(d) and not d.failures


def test_swap_defect():
    f = Field.constant(UNIFORM, 8, 8, 16)
    assert swap_defect(f) == 0.0
    g = Field.from_function(lambda x1, x2, th: UNIFORM + 0.01 * np.cos(2 * np.pi * x1) + 0 * x2 + 0 * th, 8, 8, 16)
    assert swap_defect(g) == pytest.approx(0.02)
