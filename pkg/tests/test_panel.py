import io

import numpy as np
import pytest

from dptr import (
    DgpConfig,
    DimensionError,
    PanelFormatError,
    PanelSchema,
    ThresholdParams,
    first_difference,
    load_panel,
    simulate_panel,
    write_panel_csv,
)

SCHEMA = PanelSchema(x=("x1", "q"), threshold="q")


def csv_stream(text):
    return io.StringIO(text.strip() + "\n")


def test_load_smallest_balanced_panel():
    text = """
unit,time,y,x1,q
a,1,1.0,0.1,0.5
a,2,2.0,0.2,0.6
a,3,3.0,0.3,0.7
b,1,4.0,0.4,0.8
b,2,5.0,0.5,0.9
b,3,6.0,0.6,1.0
"""
    panel = load_panel(csv_stream(text), SCHEMA)
    assert panel.n == 2 and panel.T == 3 and panel.p == 2
    assert panel.x_names == ("x1", "q")
    # threshold column is last
    assert np.array_equal(panel.q, panel.x[:, :, -1])
    assert panel.y[0, 0] == 1.0 and panel.y[1, 2] == 6.0


def test_load_unsorted_rows_are_sorted():
    text = """
unit,time,y,x1,q
b,2,5.0,0.5,0.9
a,1,1.0,0.1,0.5
b,1,4.0,0.4,0.8
a,2,2.0,0.2,0.6
"""
    panel = load_panel(csv_stream(text), SCHEMA)
    assert panel.unit_ids == ("a", "b")
    assert panel.y[0, 0] == 1.0 and panel.y[1, 1] == 5.0


def test_load_threshold_moved_last():
    schema = PanelSchema(x=("q", "x1"), threshold="q")
    text = """
unit,time,y,q,x1
a,1,1.0,0.5,0.1
a,2,2.0,0.6,0.2
"""
    panel = load_panel(csv_stream(text), schema)
    assert panel.x_names == ("x1", "q")
    assert panel.x[0, 0, 1] == 0.5


def test_load_missing_cell_is_unbalanced_error():
    text = """
unit,time,y,x1,q
a,1,1.0,0.1,0.5
a,2,2.0,0.2,0.6
a,3,3.0,0.3,0.7
b,1,4.0,0.4,0.8
b,2,5.0,0.5,0.9
"""
    with pytest.raises(PanelFormatError, match=r"missing cells.*'b'"):
        load_panel(csv_stream(text), SCHEMA)


def test_load_duplicate_cell_error():
    text = """
unit,time,y,x1,q
a,1,1.0,0.1,0.5
a,1,2.0,0.2,0.6
"""
    with pytest.raises(PanelFormatError, match="duplicate"):
        load_panel(csv_stream(text), SCHEMA)


def test_load_non_numeric_reports_row():
    text = """
unit,time,y,x1,q
a,1,1.0,0.1,0.5
a,2,oops,0.2,0.6
"""
    with pytest.raises(PanelFormatError, match="row 3"):
        load_panel(csv_stream(text), SCHEMA)


def test_roundtrip_through_writer(tmp_path):
    panel = simulate_panel(DgpConfig(n=400, T=6), seed=11)
    path = tmp_path / "panel.csv"
    write_panel_csv(panel, path)
    schema = PanelSchema(x=panel.x_names, threshold="q")
    back = load_panel(path, schema)
    assert back.n == 400 and back.T == 6 and back.p == 2
    np.testing.assert_array_equal(back.y, panel.y)
    np.testing.assert_array_equal(back.x, panel.x)


def test_first_difference_kills_constants():
    y = np.full((3, 4), 2.5)
    x = np.random.default_rng(0).normal(size=(3, 4, 2))
    from dptr import PanelDataset

    panel = PanelDataset(y=y, x=x, unit_ids=(1, 2, 3))
    diff = first_difference(panel)
    assert np.all(diff.dy == 0.0)


def test_first_difference_eliminates_fixed_effect():
    rng = np.random.default_rng(1)
    eta = rng.normal(size=(5, 1))
    t = np.arange(1, 5)[None, :]
    y = eta + t.astype(float)
    x = rng.normal(size=(5, 4, 1))
    from dptr import PanelDataset

    panel = PanelDataset(y=y, x=x, unit_ids=tuple(range(5)))
    diff = first_difference(panel)
    np.testing.assert_allclose(diff.dy, 1.0)


def test_first_difference_exact_model_identity():
    # noise-free data: differenced outcome matches the differenced regression exactly
    dgp = DgpConfig(n=50, T=6, sigma=0.0).with_jump(1.0)
    panel = simulate_panel(dgp, seed=2)
    diff = first_difference(panel)
    theta0 = ThresholdParams(
        beta=[dgp.beta2, dgp.beta3],
        delta=[dgp.delta1, dgp.delta2, dgp.delta3],
        gamma=dgp.gamma,
    )
    hi = (diff.q_pairs[:, :, 0] > theta0.gamma)[:, :, None] * diff.x_pairs[:, :, 0, :]
    lo = (diff.q_pairs[:, :, 1] > theta0.gamma)[:, :, None] * diff.x_pairs[:, :, 1, :]
    resid = diff.dy - diff.dx @ theta0.beta - (hi - lo) @ theta0.delta
    assert np.max(np.abs(resid)) < 1e-12


def test_first_difference_needs_two_periods():
    from dptr import PanelDataset

    panel = PanelDataset(
        y=np.zeros((2, 1)), x=np.zeros((2, 1, 1)), unit_ids=(1, 2)
    )
    with pytest.raises(DimensionError):
        first_difference(panel)


def test_diff_panel_shapes(seed1_panel):
    diff = first_difference(seed1_panel)
    assert diff.dy.shape == (400, 5)
    assert diff.x_pairs.shape == (400, 5, 2, 3)
    assert diff.q_pairs.shape == (400, 5, 2)
    # regime indicator reconstructible from q_pairs at any gamma
    gamma = 0.3
    ind_hi = diff.q_pairs[:, :, 0] > gamma
    assert ind_hi.dtype == bool and ind_hi.shape == (400, 5)
