"""Dataset ingestion and result serialization.

Datasets travel as a long-form CSV plus a JSON sidecar:

* CSV with header ``respondent_id,item,stage``, one row per observed
  (respondent, item) cell; a missing stage cell marks the item as
  unranked, and absent rows mean the same thing.
* Sidecar ``<name>.meta.json`` declaring the canonical item order, the
  stage count ``l``, and a ``stage_label_offset`` mapping internal stage
  1 to the label the questionnaire actually used.

Fit artifacts are a JSON report, a line-delimited JSON trace (one object
per retained sample), and an SVG heatmap with one rect per (item, stage)
cell. All writers are byte-stable: identical inputs produce identical
files.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .errors import FormatError
from .inference import FitResult, McmcTrace
from .rankings import MISSING, ItemSet, PartialRanking, StageDomain

_SIDEKICK_SUFFIX = ".meta.json"


@dataclass(frozen=True)
class QuestionnaireDataset:
    """Validated survey responses over a shared item set and stage domain."""

    items: ItemSet
    stage_domain: StageDomain
    stage_label_offset: int
    responses: tuple[tuple[str, PartialRanking], ...]
    provenance: str = ""

    def __post_init__(self):
        object.__setattr__(self, "responses", tuple(self.responses))
        ids = [rid for rid, _ in self.responses]
        if len(set(ids)) != len(ids):
            raise ValueError("respondent ids must be unique")
        observed = np.zeros(self.items.n, dtype=bool)
        for rid, ranking in self.responses:
            if ranking.n != self.items.n:
                raise ValueError(
                    f"respondent {rid!r} has {ranking.n} entries, expected {self.items.n}"
                )
            ranking.check_domain(self.stage_domain)
            for idx in ranking.observed_indices:
                observed[idx] = True
        if self.responses and not observed.all():
            silent = [self.items.labels[i] for i in np.flatnonzero(~observed)]
            raise ValueError(f"items never observed by any respondent: {silent}")

    @property
    def m(self) -> int:
        return len(self.responses)

    def rankings(self) -> list[PartialRanking]:
        return [ranking for _, ranking in self.responses]

    def external_label(self, internal_stage: int) -> int:
        return internal_stage + self.stage_label_offset - 1

    def internal_stage(self, external_label: int) -> int:
        return external_label - self.stage_label_offset + 1


def sidecar_path(csv_path: str | Path) -> Path:
    return Path(csv_path).with_suffix(_SIDEKICK_SUFFIX)


def read_dataset(path: str | Path) -> QuestionnaireDataset:
    """Load and validate a dataset from a CSV and its sidecar.

    Rows with an empty stage cell become MISSING entries. Stage labels
    are shifted by the declared offset into the internal range 1..l.
    """
    path = Path(path)
    meta_path = sidecar_path(path)
    if not path.exists():
        raise FormatError(f"dataset file not found: {path}")
    if not meta_path.exists():
        raise FormatError(f"dataset sidecar not found: {meta_path}")

    try:
        meta = json.loads(meta_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as err:
        raise FormatError(f"sidecar is not valid JSON: {err}") from err
    for key in ("items", "l", "stage_label_offset"):
        if key not in meta:
            raise FormatError(f"sidecar is missing the {key!r} key")
    items = ItemSet(tuple(str(v) for v in meta["items"]))
    domain = StageDomain(int(meta["l"]))
    offset = int(meta["stage_label_offset"])
    provenance = str(meta.get("provenance", ""))
    item_index = {label: i for i, label in enumerate(items.labels)}

    order: list[str] = []
    cells: dict[str, list] = {}
    seen: set[tuple[str, str]] = set()
    with path.open(newline="", encoding="utf-8") as handle:
        reader = csv.reader(handle)
        header = next(reader, None)
        if header != ["respondent_id", "item", "stage"]:
            raise FormatError(
                f"expected header respondent_id,item,stage, got {header}"
            )
        for row_no, row in enumerate(reader, start=2):
            if len(row) != 3:
                raise FormatError("expected 3 columns", row=row_no)
            rid, item, stage_text = row
            if item not in item_index:
                raise FormatError(f"unknown item {item!r}", row=row_no)
            if (rid, item) in seen:
                raise FormatError(
                    f"duplicate cell for respondent {rid!r}, item {item!r}", row=row_no
                )
            seen.add((rid, item))
            if rid not in cells:
                cells[rid] = [MISSING] * items.n
                order.append(rid)
            if stage_text.strip() == "":
                continue
            try:
                label = int(stage_text)
            except ValueError:
                raise FormatError(f"stage {stage_text!r} is not an integer", row=row_no)
            internal = label - offset + 1
            if not domain.contains(internal):
                raise FormatError(
                    f"stage label {label} falls outside the declared domain "
                    f"({offset}..{offset + domain.l - 1})",
                    row=row_no,
                )
            cells[rid][item_index[item]] = internal

    responses = []
    for rid in order:
        stages = cells[rid]
        if all(v is MISSING for v in stages):
            raise FormatError(f"respondent {rid!r} observed no items")
        responses.append((rid, PartialRanking(tuple(stages))))
    try:
        return QuestionnaireDataset(
            items=items,
            stage_domain=domain,
            stage_label_offset=offset,
            responses=tuple(responses),
            provenance=provenance,
        )
    except ValueError as err:
        raise FormatError(str(err)) from err


def write_dataset(ds: QuestionnaireDataset, path: str | Path) -> None:
    """Write the CSV and sidecar; the inverse of read_dataset."""
    write_raw_dataset(
        ds.items,
        ds.stage_domain.l,
        ds.stage_label_offset,
        ds.responses,
        path,
        provenance=ds.provenance,
    )


def write_raw_dataset(
    items: ItemSet,
    l: int,
    stage_label_offset: int,
    responses: Sequence[tuple[str, PartialRanking]],
    path: str | Path,
    provenance: str = "",
) -> None:
    """Dataset writer that skips QuestionnaireDataset validation.

    Heavy censoring can leave an item observed by nobody; such data is
    still worth writing out, even though read_dataset will refuse it.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = ["respondent_id,item,stage"]
    for rid, ranking in responses:
        for idx in ranking.observed_indices:
            label = ranking.stages[idx] + stage_label_offset - 1
            lines.append(f"{_csv_cell(rid)},{_csv_cell(items.labels[idx])},{label}")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")

    meta = {
        "items": list(items.labels),
        "l": l,
        "stage_label_offset": stage_label_offset,
        "provenance": provenance,
    }
    write_json(meta, sidecar_path(path))


def _csv_cell(value: str) -> str:
    if any(c in value for c in ",\"\n"):
        return '"' + value.replace('"', '""') + '"'
    return value


def write_json(payload: Mapping, path: str | Path) -> None:
    """Serialize a JSON document byte-stably (sorted keys, fixed layout)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(
        json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def item_response_rates(ds: QuestionnaireDataset) -> np.ndarray:
    """Fraction of respondents with an observed entry, per item."""
    counts = np.zeros(ds.items.n, dtype=np.int64)
    for _, ranking in ds.responses:
        for idx in ranking.observed_indices:
            counts[idx] += 1
    return counts / max(ds.m, 1)


def filter_items(ds: QuestionnaireDataset, min_rate: float) -> QuestionnaireDataset:
    """Drop items whose response rate falls below min_rate.

    Responses are re-projected onto the surviving items; respondents left
    with nothing observed are dropped (logged, not an error).
    """
    if not (0.0 <= min_rate <= 1.0):
        raise ValueError(f"min_rate must lie in [0, 1], got {min_rate}")
    rates = item_response_rates(ds)
    keep = [i for i in range(ds.items.n) if rates[i] >= min_rate]
    if not keep:
        raise ValueError(
            f"no items reach a response rate of {min_rate}; nothing to keep"
        )
    if len(keep) == ds.items.n:
        return ds

    responses = []
    dropped = 0
    for rid, ranking in ds.responses:
        stages = tuple(ranking.stages[i] for i in keep)
        if all(v is MISSING for v in stages):
            dropped += 1
            continue
        responses.append((rid, PartialRanking(stages)))
    if dropped:
        logging.getLogger(__name__).info(
            "filter_items dropped %d respondent(s) left with no observed items",
            dropped,
        )
    return QuestionnaireDataset(
        items=ItemSet(tuple(ds.items.labels[i] for i in keep)),
        stage_domain=ds.stage_domain,
        stage_label_offset=ds.stage_label_offset,
        responses=tuple(responses),
        provenance=ds.provenance,
    )


def read_ranking_file(path: str | Path) -> tuple[list, int]:
    """Read a ranking JSON file: {"stages": [...], "stage_label_offset": k}.

    Entries are integers or null (unranked). Returns the stages shifted to
    internal numbering along with the declared offset (default 1).
    """
    path = Path(path)
    if not path.exists():
        raise FormatError(f"ranking file not found: {path}")
    try:
        payload = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as err:
        raise FormatError(f"ranking file is not valid JSON: {err}") from err
    if not isinstance(payload, dict) or "stages" not in payload:
        raise FormatError('ranking file must be an object with a "stages" array')
    offset = int(payload.get("stage_label_offset", 1))
    stages = []
    for k, value in enumerate(payload["stages"]):
        if value is None:
            stages.append(MISSING)
        else:
            try:
                stages.append(int(value) - offset + 1)
            except (TypeError, ValueError):
                raise FormatError(f"stage entry {k} is not an integer or null")
    if not stages:
        raise FormatError("ranking file has no stages")
    return stages, offset


def write_ranking_file(
    stages: Sequence, path: str | Path, stage_label_offset: int = 1
) -> None:
    labels = [
        None if v is MISSING else int(v) + stage_label_offset - 1 for v in stages
    ]
    write_json({"stages": labels, "stage_label_offset": stage_label_offset}, path)


def write_fit_report(
    result: FitResult,
    ds: QuestionnaireDataset,
    path: str | Path,
    manifest: Mapping | None = None,
    evaluation: Mapping | None = None,
) -> None:
    """Write the fit summary as a single JSON document.

    The MAP center appears both in internal stages and in the external
    labels declared by the dataset's stage_label_offset.
    """
    internal = list(result.pi_map.stages)
    report = {
        "items": list(ds.items.labels),
        "map_center_internal": internal,
        "map_center_labels": [ds.external_label(v) for v in internal],
        "stage_label_offset": ds.stage_label_offset,
        "lambda_map": result.lambda_map,
        "acceptance_rates": {
            "center": result.trace.accept_rate_center,
            "spread": result.trace.accept_rate_spread,
        },
        "retained_samples": len(result.trace),
        "manifest": dict(manifest) if manifest is not None else None,
        "evaluation": dict(evaluation) if evaluation is not None else None,
    }
    write_json(report, path)


def write_trace(trace: McmcTrace, path: str | Path) -> None:
    """Write one JSON object per retained sample, line-delimited."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = []
    for it, spread, log_post, row in zip(
        trace.iterations, trace.spreads, trace.log_posteriors, trace.centers
    ):
        record = {
            "iter": int(it),
            "lambda": float(spread),
            "log_post": float(log_post),
            "stages": [int(v) for v in row],
        }
        lines.append(json.dumps(record, separators=(",", ":")))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_trace(path: str | Path) -> list[dict]:
    with Path(path).open(encoding="utf-8") as handle:
        return [json.loads(line) for line in handle if line.strip()]


_SVG_CELL = 42
_SVG_LEFT = 260
_SVG_TOP = 40


def write_heatmap_svg(
    marginals: np.ndarray,
    ds: QuestionnaireDataset,
    path: str | Path,
    manifest: Mapping | None = None,
) -> None:
    """Render stage marginals as an SVG grid, one rect per (item, stage).

    Cell shading scales linearly with the marginal frequency; column
    headers use the dataset's external stage labels.
    """
    marginals = np.asarray(marginals, dtype=float)
    n, l = marginals.shape
    if n != ds.items.n or l != ds.stage_domain.l:
        raise ValueError(
            f"marginals are {marginals.shape}, dataset wants ({ds.items.n}, {ds.stage_domain.l})"
        )
    width = _SVG_LEFT + l * _SVG_CELL + 20
    height = _SVG_TOP + n * _SVG_CELL + 20
    parts = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" '
        f'width="{width}" height="{height}" '
        f'font-family="sans-serif" font-size="12">',
    ]
    if manifest is not None:
        blob = json.dumps(dict(manifest), sort_keys=True, separators=(",", ":"))
        parts.append(f"<!-- manifest: {blob.replace('--', '- -')} -->")
    for s in range(l):
        x = _SVG_LEFT + s * _SVG_CELL + _SVG_CELL // 2
        parts.append(
            f'<text x="{x}" y="{_SVG_TOP - 10}" text-anchor="middle">'
            f"{ds.external_label(s + 1)}</text>"
        )
    for i in range(n):
        y = _SVG_TOP + i * _SVG_CELL
        label = _xml_escape(ds.items.labels[i])
        parts.append(
            f'<text x="{_SVG_LEFT - 8}" y="{y + _SVG_CELL // 2 + 4}" '
            f'text-anchor="end">{label}</text>'
        )
        for s in range(l):
            x = _SVG_LEFT + s * _SVG_CELL
            parts.append(
                f'<rect x="{x}" y="{y}" width="{_SVG_CELL - 2}" '
                f'height="{_SVG_CELL - 2}" fill="#2a6f97" '
                f'fill-opacity="{marginals[i, s]:.6f}" '
                f'stroke="#444444" stroke-width="0.5"/>'
            )
    parts.append("</svg>")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(parts) + "\n", encoding="utf-8")


def _xml_escape(text: str) -> str:
    return (
        text.replace("&", "&amp;")
        .replace("<", "&lt;")
        .replace(">", "&gt;")
        .replace('"', "&quot;")
    )


def demo_dataset_path() -> Path:
    """Location of the bundled synthetic demonstration dataset."""
    return Path(__file__).parent / "data" / "wellbeing_survey_synthetic.csv"
