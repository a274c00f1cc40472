import csv
import io

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mvflstm.analysis import (
    TABLE1,
    count_params,
    lstm_param_count,
    projection_saving,
    render_table,
    round_half_up,
    table1_report,
    table_csv,
    view_output_size,
)
from mvflstm.encoder import EncoderConfig, EncoderParams, ViewConfig

EXACT_TOTALS = {
    "01": 25_613_872,
    "02": 29_459_248,
    "03": 26_316_592,
    "04": 24_749_872,
    "05": 27_811_888,
    "06": 32_521_264,
    "07": 30_954_544,
    "08": 34_016_560,
    "09": 44_827_696,
    "10": 44_902_192,
    "11": 24_758_192,
    "12": 26_044_464,
    "13": 28_617_008,
}


def test_view_output_size_examples():
    assert view_output_size(768, 24, 12, 16) == 2016
    assert view_output_size(768, 96, 48, 32) == 960
    assert view_output_size(768, 768, 384, 7) == 14  # a single chunk
    three = sum(view_output_size(768, F, F // 2, 32) for F in (24, 48, 96))
    assert three == 6976


def test_lstm_count_formula():
    assert lstm_param_count(1, 1) == 12
    assert lstm_param_count(768, 768) == 4 * 1537 * 768
    assert lstm_param_count(10, 4, biases=2) - lstm_param_count(10, 4) == 16


def test_exact_totals():
    lines = {ln.id: ln for ln in table1_report()}
    assert {k: v.total for k, v in lines.items()} == EXACT_TOTALS


@pytest.mark.parametrize(
    "cfg",
    [
        EncoderConfig(12, (ViewConfig(6, 3, 2, 2),), tlstm_layers=2, tlstm_hidden=4, output_classes=3),
        EncoderConfig(12, (ViewConfig(6, 3, 1, 3), ViewConfig(12, 6, 3, 2)), 5, 1, 7, 4),
        EncoderConfig(9, (), tlstm_layers=3, tlstm_hidden=2, output_classes=2),
    ],
)
def test_count_matches_materialised_params(cfg, rng):
    assert count_params(cfg).total == EncoderParams.init(cfg, rng).num_params()


def test_count_matches_materialised_params_toy(rng):
    from mvflstm.train import TOY_CONFIG

    assert count_params(TOY_CONFIG).total == EncoderParams.init(TOY_CONFIG, rng).num_params()


def test_projection_saving_full_size():
    # 4*768*6848 - 6976*128 - 128
    assert projection_saving(768, 6976, 128) == 21_037_056 - 892_928 - 128 == 20_144_000
    assert EXACT_TOTALS["10"] - EXACT_TOTALS["11"] == 20_144_000


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 2048), st.integers(1, 8192))
def test_projection_saving_when_equal_width(M, V):
    # P = V still costs the projection itself
    assert projection_saving(M, V, V) == -(V * V + V)


@settings(max_examples=100, deadline=None)
@given(
    st.lists(st.sampled_from([(6, 3), (12, 6), (24, 12)]), min_size=1, max_size=3),
    st.integers(1, 3),
    st.integers(1, 8),
    st.integers(1, 64),
    st.integers(1, 3),
    st.integers(1, 64),
)
def test_projection_saving_identity(windows, K, L, P, layers, M):
    views = tuple(ViewConfig(F, S, K, L) for F, S in windows)
    plain = EncoderConfig(48, views, None, layers, M, 5)
    proj = EncoderConfig(48, views, P, layers, M, 5)
    V = plain.multi_view_dim
    assert count_params(plain).total - count_params(proj).total == projection_saving(M, V, P)


def test_projection_rows_consistent():
    for rid, P in (("11", 128), ("12", 256), ("13", 512)):
        assert EXACT_TOTALS["10"] - EXACT_TOTALS[rid] == projection_saving(768, 6976, P)


def test_extra_layer_cost():
    # one more 64->32 bidirectional layer in each of the three views
    assert EXACT_TOTALS["10"] - EXACT_TOTALS["09"] == 3 * 2 * lstm_param_count(64, 32) == 74_496


def test_view_order_invariance():
    a = EncoderConfig(768, (ViewConfig.half_stride(24, 2, 16), ViewConfig.half_stride(96, 2, 16)))
    b = EncoderConfig(768, (ViewConfig.half_stride(96, 2, 16), ViewConfig.half_stride(24, 2, 16)))
    assert count_params(a).total == count_params(b).total


def test_rows_within_one_tenth_of_reference():
    for ln, row in zip(table1_report(), TABLE1):
        assert abs(ln.total / 1e6 - row.ref_total_m) <= 0.1
        if row.ref_delta_pct is not None:
            assert abs(ln.delta_rounded - row.ref_delta_pct) <= 0.1 + 1e-9


def test_two_bias_convention_rounds_to_reference():
    for ln, row in zip(table1_report(lstm_biases=2), TABLE1):
        assert ln.total_m == row.ref_total_m, ln.id
        if row.ref_delta_pct is not None:
            assert abs(ln.delta_rounded - row.ref_delta_pct) <= 0.1 + 1e-9


def test_baseline_has_no_delta():
    first = table1_report()[0]
    assert first.delta_pct is None and first.delta_rounded is None
    assert count_params(TABLE1[0].config).delta_pct is None


def test_delta_against_baseline():
    base = count_params(TABLE1[0].config)
    r = count_params(TABLE1[1].config).with_baseline(base)
    assert r.delta_pct == pytest.approx(100 * (29_459_248 - 25_613_872) / 25_613_872)
    assert "delta %" in r.render()


def test_round_half_up():
    assert round_half_up(0.25) == 0.3
    assert round_half_up(-0.25) == -0.3
    assert round_half_up(24.75) == 24.8
    assert round_half_up(24.749872) == 24.7


def test_render_and_csv():
    lines = table1_report()
    text = render_table(lines)
    assert len(text.splitlines()) == 2 + len(TABLE1)
    rows = list(csv.DictReader(io.StringIO(table_csv(lines))))
    assert [r["id"] for r in rows] == [r.id for r in TABLE1]
    assert int(rows[0]["total"]) == 25_613_872 and rows[0]["delta_pct"] == ""
    assert float(rows[10]["delta_pct"]) == pytest.approx(np.round(100 * (24_758_192 / 25_613_872 - 1), 4))
