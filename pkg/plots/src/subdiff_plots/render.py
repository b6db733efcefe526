"""Learning-curve comparison figures from harness outputs.

Reads the documented curves.csv schema (iteration, algorithm, msd_db and
its two decomposition columns) and summary.json (theory values), and
renders one figure: MSD in dB versus iteration, one line per algorithm,
horizontal dashed lines for the selected theory predictions. Rendering is
read-only and deterministic: re-rendering the same inputs reproduces the
output byte for byte.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from subdiff_plots.errors import MissingSeries, SchemaMismatch

_CSV_COLUMNS = {
    "iteration",
    "algorithm",
    "msd_db",
    "msd_component_U_db",
    "msd_component_perp_db",
}

_THEORY_KEYS = {"exact": "msd_exact_db", "small_mu": "msd_small_mu_db"}
_THEORY_LABELS = {"exact": "theory (series)", "small_mu": "theory (small step)"}

# fixed metadata so PNG/SVG outputs carry no timestamps or versions
_METADATA = {
    ".png": {"Software": "subdiff-plots"},
    ".svg": {"Date": None},
}


@dataclass
class FigureSpec:
    """What to draw: input paths, series selection, overlays, output path.

    ``algorithms`` of None selects every series present in the CSV; an
    empty selection is an error. ``theory`` entries come from
    {"exact", "small_mu"}.
    """

    curves_path: str
    summary_path: str
    out_path: str
    algorithms: list[str] | None = None
    theory: list[str] = field(default_factory=lambda: ["exact", "small_mu"])


def load_curves(path: str) -> dict[str, tuple[list[int], list[float]]]:
    """Parse curves.csv into {algorithm: (iterations, msd_db)}."""
    series: dict[str, tuple[list[int], list[float]]] = {}
    try:
        with open(path, newline="") as f:
            reader = csv.DictReader(f)
            if reader.fieldnames is None or set(reader.fieldnames) != _CSV_COLUMNS:
                raise SchemaMismatch(
                    f"{path}: expected columns {sorted(_CSV_COLUMNS)}, got {reader.fieldnames}"
                )
            for row in reader:
                its, vals = series.setdefault(row["algorithm"], ([], []))
                its.append(int(row["iteration"]))
                vals.append(float(row["msd_db"]))
    except FileNotFoundError as exc:
        raise SchemaMismatch(f"curves file not found: {path}") from exc
    except (ValueError, TypeError, KeyError) as exc:
        raise SchemaMismatch(f"{path}: malformed row ({exc})") from exc
    if not series:
        raise SchemaMismatch(f"{path}: no data rows")
    return series


def load_theory(path: str, names: list[str]) -> dict[str, float]:
    """Read the requested theory dB values from summary.json."""
    try:
        with open(path) as f:
            summary = json.load(f)
    except FileNotFoundError as exc:
        raise SchemaMismatch(f"summary file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise SchemaMismatch(f"{path}: invalid JSON ({exc})") from exc
    theory = summary.get("theory", {})
    out = {}
    for name in names:
        if name not in _THEORY_KEYS:
            raise SchemaMismatch(f"unknown theory overlay {name!r}; pick from {sorted(_THEORY_KEYS)}")
        key = _THEORY_KEYS[name]
        if key not in theory:
            raise SchemaMismatch(f"{path}: theory value {key} missing")
        out[name] = float(theory[key])
    return out


def render_comparison(spec: FigureSpec) -> str:
    """Render the comparison figure; returns the output path.

    Raises SchemaMismatch on malformed inputs and MissingSeries when the
    selection is empty or requests an absent algorithm.
    """
    series = load_curves(spec.curves_path)
    if spec.algorithms is None:
        selected = list(series)
    else:
        selected = list(spec.algorithms)
    if not selected:
        raise MissingSeries("empty series selection")
    for name in selected:
        if name not in series:
            raise MissingSeries(f"algorithm {name!r} not in {sorted(series)}")
    overlays = load_theory(spec.summary_path, list(spec.theory))

    # searchable text and salted ids keep SVG output stable and inspectable
    with plt.rc_context({"svg.fonttype": "none", "svg.hashsalt": "subdiff-plots"}):
        return _draw(spec, series, selected, overlays)


def _draw(spec, series, selected, overlays) -> str:
    fig, ax = plt.subplots(figsize=(7.0, 4.5))
    for name in selected:
        its, vals = series[name]
        ax.plot(its, vals, label=name, linewidth=1.2)
    for name, value in overlays.items():
        ax.axhline(value, linestyle="--", color="black", linewidth=0.9)
        ax.annotate(
            _THEORY_LABELS[name],
            xy=(1.0, value),
            xycoords=("axes fraction", "data"),
            xytext=(-4, 3),
            textcoords="offset points",
            ha="right",
            fontsize=8,
        )
    ax.set_xlabel("iteration")
    ax.set_ylabel("MSD [dB]")
    ax.grid(True, alpha=0.3)
    ax.legend(loc="upper right")
    fig.tight_layout()
    suffix = "." + spec.out_path.rsplit(".", 1)[-1].lower() if "." in spec.out_path else ".png"
    fig.savefig(spec.out_path, dpi=150, metadata=_METADATA.get(suffix, None))
    plt.close(fig)
    return spec.out_path
