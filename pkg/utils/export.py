# ============================================================================
# FILE: utils/export.py
# ============================================================================
import json
import re
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
import pandas as pd  # noqa: E402

from tools.cantor import CantorTree  # noqa: E402
from tools.geometry import AnisotropicRectangle  # noqa: E402

# fixed ids in the SVG so reruns are byte-identical
plt.rcParams["svg.hashsalt"] = "ubiquity"


def slugify(value: str) -> str:
    value = value.strip().lower()
    value = re.sub(r"[^a-z0-9]+", "_", value)
    value = re.sub(r"_+", "_", value)
    return value.strip("_") or "run"


def run_directory(base: str | Path, command: str, explicit: bool = False) -> Path:
    """base itself when given explicitly, else base/<timestamp>_<command>."""
    root = Path(base)
    if not explicit:
        timestamp = datetime.now(timezone.utc).strftime("%Y%m%dT%H%M%SZ")
        root = root / f"{timestamp}_{slugify(command)}"
    root.mkdir(parents=True, exist_ok=True)
    return root


def _json_default(value: Any) -> Any:
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    if isinstance(value, np.ndarray):
        return value.tolist()
    if hasattr(value, "model_dump"):
        return value.model_dump(mode="json")
    return str(value)


def canonical_json(payload: Any) -> str:
    return json.dumps(payload, sort_keys=True, separators=(",", ":"), default=_json_default)


def write_json(payload: Dict[str, Any], path: Path) -> Path:
    with path.open("w", encoding="utf-8") as handle:
        json.dump(payload, handle, ensure_ascii=False, indent=2, sort_keys=True, default=_json_default)
        handle.write("\n")
    return path


def write_jsonl(records: Iterable[Dict[str, Any]], path: Path) -> Path:
    with path.open("w", encoding="utf-8") as handle:
        for record in records:
            handle.write(canonical_json(record))
            handle.write("\n")
    return path


def write_csv(rows: Sequence[Dict[str, Any]] | pd.DataFrame, path: Path) -> Path:
    frame = rows if isinstance(rows, pd.DataFrame) else pd.DataFrame(list(rows))
    frame.to_csv(path, index=False, float_format="%.12g", lineterminator="\n")
    return path


def rectangles_frame(rects: Sequence[AnisotropicRectangle]) -> pd.DataFrame:
    """One row per rectangle: n, x_i, r, tau_i and the rotation matrix row-major."""
    rows: List[Dict[str, Any]] = []
    for n, rect in enumerate(rects, start=1):
        row: Dict[str, Any] = {"n": n}
        row.update({f"x_{i + 1}": x for i, x in enumerate(rect.anchor.coords)})
        row["r"] = rect.base_radius
        row.update({f"tau_{i + 1}": t for i, t in enumerate(rect.profile.exponents)})
        flat = rect.rotation.as_array().ravel()
        row.update({f"o_{i // rect.d + 1}{i % rect.d + 1}": float(v) for i, v in enumerate(flat)})
        rows.append(row)
    return pd.DataFrame(rows)


def tree_records(tree: CantorTree) -> List[Dict[str, Any]]:
    """One JSON-ready record per Cantor node, parents before children."""
    records = []
    for node in tree.nodes():
        record: Dict[str, Any] = {
            "id": node.node_id,
            "parent": node.parent_id,
            "generation": node.generation,
            "eta": node.eta_mass,
        }
        if node.rectangle is not None:
            rect = node.rectangle
            record["rectangle"] = {
                "anchor": list(rect.anchor.coords),
                "r": rect.base_radius,
                "tau": list(rect.profile.exponents),
                "rotation": rect.rotation.as_array().ravel().tolist(),
            }
            record["host_cube"] = {"level": node.host_cube.level, "index": list(node.host_cube.index)}
            record["mu_upper"] = node.mu_upper
            record["size_conditions_met"] = node.size_conditions_met
        if node.lattice is not None:
            record["lattice"] = {
                "level": node.lattice.level,
                "starts": list(node.lattice.starts),
                "counts": list(node.lattice.counts),
            }
        if node.cubes:
            record["cubes"] = [
                {
                    "ordinal": c.ordinal,
                    "level": c.cube.level,
                    "index": list(c.cube.index),
                    "eta": c.eta_mass,
                    "retained_fraction": c.retained_fraction,
                    "candidates": c.candidates,
                }
                for _, c in sorted(node.cubes.items())
            ]
        records.append(record)
    return records


def write_plot(
    path: Path,
    x: Sequence[float],
    y: Sequence[float],
    *,
    title: str,
    xlabel: str,
    ylabel: str,
    reference_slope: Optional[float] = None,
    log_x: bool = False,
    log_y: bool = True,
) -> Path:
    """Line plot of (x, y), log2 axes on request, with an optional reference line of the given slope."""
    fig, ax = plt.subplots(figsize=(6, 4))
    xs = np.asarray(x, dtype=float)
    ys = np.asarray(y, dtype=float)
    ax.plot(xs, ys, "o-", label="measured")
    if reference_slope is not None and log_y and len(xs) and np.all(ys > 0):
        anchor = float(np.log2(ys[0]))
        ax.plot(xs, 2.0 ** (anchor + reference_slope * (xs - xs[0])), "--", label=f"slope {reference_slope:.4f}")
    if log_y:
        ax.set_yscale("log", base=2)
    if log_x:
        ax.set_xscale("log", base=2)
    ax.set_title(title)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return path
