"""Static parameter accounting for encoder topologies."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal

from .encoder import EncoderConfig, ViewConfig, chunk_count


def view_output_size(N: int, F: int, S: int, L: int) -> int:
    """Width of one view's output: chunk count times both directions of the last layer."""
    return chunk_count(N, F, S) * L * 2


def lstm_param_count(input_dim: int, hidden: int, biases: int = 1) -> int:
    """``biases=2`` counts separate input and recurrent bias vectors."""
    return 4 * (input_dim + hidden + biases) * hidden


@dataclass
class ParamReport:
    per_component: list[tuple[str, int]] = field(default_factory=list)
    baseline_total: int | None = None

    @property
    def total(self) -> int:
        return sum(n for _, n in self.per_component)

    @property
    def delta_pct(self) -> float | None:
        if self.baseline_total is None:
            return None
        return 100.0 * (self.total - self.baseline_total) / self.baseline_total

    def with_baseline(self, baseline: "ParamReport | int") -> "ParamReport":
        b = baseline.total if isinstance(baseline, ParamReport) else int(baseline)
        return ParamReport(list(self.per_component), b)

    def render(self) -> str:
        width = max(len(name) for name, _ in self.per_component + [("total", 0)])
        lines = [f"{name:<{width}}  {n:>12,d}" for name, n in self.per_component]
        lines.append(f"{'total':<{width}}  {self.total:>12,d}")
        if self.baseline_total is not None:
            lines.append(f"{'baseline':<{width}}  {self.baseline_total:>12,d}")
            lines.append(f"{'delta %':<{width}}  {self.delta_pct:>+12.2f}")
        return "\n".join(lines)


def count_params(cfg: EncoderConfig, lstm_biases: int = 1) -> ParamReport:
    parts = []
    for i, v in enumerate(cfg.views):
        n = 0
        for k in range(v.K):
            n += 2 * lstm_param_count(v.F if k == 0 else 2 * v.L, v.L, lstm_biases)
        parts.append((f"view{i} {v}", n))
    if cfg.projection_dim is not None:
        V, P = cfg.multi_view_dim, cfg.projection_dim
        parts.append((f"projection {V}->{P}", V * P + P))
    n_in = cfg.tlstm_input_dim
    for k in range(cfg.tlstm_layers):
        parts.append((f"tlstm{k} {n_in}->{cfg.tlstm_hidden}", lstm_param_count(n_in, cfg.tlstm_hidden, lstm_biases)))
        n_in = cfg.tlstm_hidden
    parts.append((f"output {cfg.tlstm_hidden}->{cfg.output_classes}", (cfg.tlstm_hidden + 1) * cfg.output_classes))
    return ParamReport(parts)


def projection_saving(M: int, V: int, P: int) -> int:
    """Parameters saved by projecting a ``V``-wide view output to ``P`` before a time-LSTM of width ``M``."""
    return 4 * M * (V - P) - V * P - P


def round_half_up(x: float, places: int = 1) -> float:
    q = Decimal(1).scaleb(-places)
    return float(Decimal(repr(x)).quantize(q, rounding=ROUND_HALF_UP))


# ---------------------------------------------------------------------------
# reference topology table


@dataclass(frozen=True)
class TableRow:
    id: str
    model: str
    config: EncoderConfig
    ref_total_m: float
    ref_delta_pct: float | None


def _mv(windows, K=2, L=16, P=None, N=768):
    return EncoderConfig(N, tuple(ViewConfig.half_stride(F, K, L) for F in windows), P)


TABLE1 = (
    TableRow("01", "LSTM", _mv(()), 25.6, None),
    TableRow("02", "FLSTM", _mv((24,)), 29.5, 15.0),
    TableRow("03", "FLSTM", _mv((48,)), 26.3, 2.7),
    TableRow("04", "FLSTM", _mv((96,)), 24.8, -3.4),
    TableRow("05", "mvFLSTM", _mv((48, 96)), 27.8, 8.6),
    TableRow("06", "mvFLSTM", _mv((24, 48)), 32.5, 27.0),
    TableRow("07", "mvFLSTM", _mv((24, 96)), 31.0, 20.8),
    TableRow("08", "mvFLSTM", _mv((24, 48, 96)), 34.0, 32.8),
    TableRow("09", "mvFLSTM", _mv((24, 48, 96), L=32), 44.8, 75.0),
    TableRow("10", "mvFLSTM", _mv((24, 48, 96), K=3, L=32), 44.9, 75.3),
    TableRow("11", "mvFLSTMp", _mv((24, 48, 96), K=3, L=32, P=128), 24.8, -3.3),
    TableRow("12", "mvFLSTMp", _mv((24, 48, 96), K=3, L=32, P=256), 26.1, 1.7),
    TableRow("13", "mvFLSTMp", _mv((24, 48, 96), K=3, L=32, P=512), 28.6, 11.7),
)


@dataclass
class TableLine:
    id: str
    model: str
    flstm: str
    views: str
    projection: str
    total: int
    delta_pct: float | None

    @property
    def total_m(self) -> float:
        return round_half_up(self.total / 1e6, 1)

    @property
    def delta_rounded(self) -> float | None:
        return None if self.delta_pct is None else round_half_up(self.delta_pct, 1)


def table1_report(rows=TABLE1, lstm_biases: int = 1) -> list[TableLine]:
    """Recount every row; the first row is the baseline for the delta column."""
    rows = list(rows)
    if not rows:
        return []
    baseline = count_params(rows[0].config, lstm_biases).total
    out = []
    for i, r in enumerate(rows):
        cfg = r.config
        report = count_params(cfg, lstm_biases)
        flstm = f"L{cfg.views[0].K}x{cfg.views[0].L}" if cfg.views else "-"
        views = " ".join(f"{v.F}/{v.S}" for v in cfg.views) or "-"
        proj = str(cfg.projection_dim) if cfg.projection_dim is not None else "-"
        delta = None if i == 0 else report.with_baseline(baseline).delta_pct
        out.append(TableLine(r.id, r.model, flstm, views, proj, report.total, delta))
    return out


def render_table(lines: list[TableLine], rows=TABLE1) -> str:
    ref = {r.id: r for r in rows}
    header = f"{'id':<3} {'model':<9} {'FLSTM':<6} {'views':<17} {'proj':>5} {'params':>11} {'M':>5} {'d%':>6}   {'ref M':>6} {'ref d%':>7}"
    out = [header, "-" * len(header)]
    for ln in lines:
        d = "-" if ln.delta_rounded is None else f"{ln.delta_rounded:+.1f}"
        p = ref.get(ln.id)
        pm = f"{p.ref_total_m:.1f}" if p else ""
        pd = "" if p is None else ("-" if p.ref_delta_pct is None else f"{p.ref_delta_pct:+.1f}")
        out.append(
            f"{ln.id:<3} {ln.model:<9} {ln.flstm:<6} {ln.views:<17} {ln.projection:>5} "
            f"{ln.total:>11,d} {ln.total_m:>5.1f} {d:>6}   {pm:>6} {pd:>7}"
        )
    return "\n".join(out)


def table_csv(lines: list[TableLine]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["id", "total", "delta_pct"])
    for ln in lines:
        w.writerow([ln.id, ln.total, "" if ln.delta_pct is None else f"{ln.delta_pct:.4f}"])
    return buf.getvalue()
