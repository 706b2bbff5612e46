"""Retrieval metrics and embedding diagnostics (radii, query selection)."""

from __future__ import annotations

import csv
import hashlib
import json
import os
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence

import numpy as np

from .geometry import radius
from .losses import query_distances
from .model import ModelConfig, embed

KS = (1, 5, 10)
N_BINS = 50


def fmt(x: float) -> float:
    """Round to 6 significant digits (the precision of every written report)."""
    return float(f"{x:.6g}")


@dataclass
class RetrievalReport:
    tr: Dict[int, float]
    ir: Dict[int, float]
    checksum: str

    def as_dict(self) -> dict:
        out = {f"TR@{k}": fmt(v) for k, v in self.tr.items()}
        out.update({f"IR@{k}": fmt(v) for k, v in self.ir.items()})
        out["checksum"] = self.checksum
        return out


@dataclass
class SelectionHistogram:
    counts: List[int]

    @property
    def total(self) -> int:
        return int(sum(self.counts))

    @property
    def entropy(self) -> float:
        return selection_entropy(self.counts)


@dataclass
class RadiusReport:
    image_radius: np.ndarray  # (M,) mean over queries
    query_radius: np.ndarray  # (M, N)
    text_radius: np.ndarray  # (M,)
    by_leaf: Dict[str, dict]
    by_depth: Dict[int, dict]
    bin_edges: np.ndarray
    image_hist: np.ndarray
    text_hist: np.ndarray


def selection_entropy(counts: Sequence[int]) -> float:
    """Shannon entropy (nats) of the empirical selection distribution; 0 * log 0 = 0."""
    c = np.asarray(counts, dtype=np.float64)
    total = c.sum()
    if total == 0:
        return 0.0
    p = c[c > 0] / total
    return float(-np.sum(p * np.log(p)))


def _ranks(scores: np.ndarray) -> np.ndarray:
    """Rank of the diagonal entry in each row; ties go to the lower column index."""
    n = scores.shape[0]
    diag = scores[np.arange(n), np.arange(n)][:, None]
    cols = np.arange(scores.shape[1])[None, :]
    better = (scores > diag) | ((scores == diag) & (cols < np.arange(n)[:, None]))
    return better.sum(axis=1)


def retrieval_from_scores(scores: np.ndarray, ks: Sequence[int] = KS) -> RetrievalReport:
    """TR@k over rows (image -> texts) and IR@k over columns, in percent.

    ``scores[i, t]`` is the similarity of image ``i`` and caption ``t``;
    pair ``(i, i)`` is the correct match.
    """
    scores = np.asarray(scores, dtype=np.float64)
    if scores.ndim != 2 or scores.shape[0] != scores.shape[1] or scores.shape[0] == 0:
        raise ValueError(f"need a non-empty square score matrix, got shape {scores.shape}")
    tr_rank = _ranks(scores)
    ir_rank = _ranks(scores.T)
    tr = {k: 100.0 * float(np.mean(tr_rank < k)) for k in ks}
    ir = {k: 100.0 * float(np.mean(ir_rank < k)) for k in ks}
    checksum = hashlib.sha256(np.ascontiguousarray(scores).tobytes()).hexdigest()[:16]
    return RetrievalReport(tr, ir, checksum)


def score_matrix(params, patches, seqs, model_cfg: ModelConfig, similarity: str, space: str) -> np.ndarray:
    """``-min_j dist(e_ij, u_t)`` for every image ``i`` and caption ``t``."""
    E, U = embed(params, patches, seqs, model_cfg, space)
    D = query_distances(E, U, similarity, model_cfg.ball)
    return -D.min(axis=1)


def retrieval_at_k(params, patches, seqs, model_cfg: ModelConfig, similarity: str = "cosine",
                   space: str = "hyperbolic", ks: Sequence[int] = KS) -> RetrievalReport:
    if len(patches) == 0:
        raise ValueError("empty test set")
    return retrieval_from_scores(score_matrix(params, patches, seqs, model_cfg, similarity, space), ks)


def selected_queries(params, patches, seqs, model_cfg: ModelConfig, similarity: str = "cosine",
                     space: str = "hyperbolic") -> np.ndarray:
    """Deterministic argmin query for each positive pair."""
    E, U = embed(params, patches, seqs, model_cfg, space)
    D = query_distances(E, U, similarity, model_cfg.ball)
    n = len(U)
    return np.argmin(D[np.arange(n), :, np.arange(n)], axis=1)


def selection_histogram(params, patches, seqs, model_cfg: ModelConfig, similarity: str = "cosine",
                        space: str = "hyperbolic") -> SelectionHistogram:
    sel = selected_queries(params, patches, seqs, model_cfg, similarity, space)
    return SelectionHistogram([int(c) for c in np.bincount(sel, minlength=model_cfg.n_queries)])


def _group_stats(values: np.ndarray, labels: Sequence) -> Dict:
    groups: Dict = {}
    for v, lab in zip(values, labels):
        groups.setdefault(lab, []).append(v)
    return {lab: {"count": len(vs), "mean": float(np.mean(vs)), "std": float(np.std(vs))}
            for lab, vs in sorted(groups.items())}


def radius_report(params, patches, seqs, leaves: Sequence[str], depths: Sequence[int],
                  model_cfg: ModelConfig, space: str = "hyperbolic") -> RadiusReport:
    """Per-example, per-class and histogram summaries of embedding radii."""
    if space != "hyperbolic":
        raise ValueError("radius analytics need hyperbolic embeddings")
    E, U = embed(params, patches, seqs, model_cfg, space)
    ball = model_cfg.ball
    q = radius(E, ball)
    img = q.mean(axis=1)
    txt = radius(U, ball)
    edges = np.linspace(0.0, 2.0 * model_cfg.max_norm, N_BINS + 1)
    return RadiusReport(
        image_radius=img, query_radius=q, text_radius=txt,
        by_leaf=_group_stats(img, leaves), by_depth=_group_stats(img, depths),
        bin_edges=edges,
        image_hist=np.histogram(np.clip(img, edges[0], edges[-1]), bins=edges)[0],
        text_hist=np.histogram(np.clip(txt, edges[0], edges[-1]), bins=edges)[0],
    )


# ---------------------------------------------------------------------------
# report files

RADIUS_CSV = ("group", "class", "count", "mean", "std")
HIST_CSV = ("bin_lo", "bin_hi", "image_count", "text_count")
SELECTION_CSV = ("query", "count")


def _write_csv(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _read_csv(path, header):
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows or tuple(rows[0]) != tuple(header):
        raise ValueError(f"{path}: unexpected header {rows[0] if rows else None}")
    return rows[1:]


def summary_dict(retrieval: Optional[RetrievalReport] = None, selection: Optional[SelectionHistogram] = None,
                 radii: Optional[RadiusReport] = None) -> dict:
    out: dict = {}
    if retrieval is not None:
        out["retrieval"] = retrieval.as_dict()
    if selection is not None:
        out["selection"] = {"counts": list(selection.counts), "entropy": fmt(selection.entropy)}
    if radii is not None:
        out["radius"] = {
            "image_mean": fmt(float(radii.image_radius.mean())),
            "image_std": fmt(float(radii.image_radius.std())),
            "text_mean": fmt(float(radii.text_radius.mean())),
            "text_std": fmt(float(radii.text_radius.std())),
        }
    return out


def emit_report(out_dir, retrieval: Optional[RetrievalReport] = None,
                selection: Optional[SelectionHistogram] = None,
                radii: Optional[RadiusReport] = None) -> Dict[str, str]:
    """Write the given reports under ``out_dir``; returns the paths written.

    Files: ``retrieval.json``, ``selection.csv`` (query, count),
    ``radius.csv`` (group, class, count, mean, std; one row per leaf class and
    per depth), ``radius_hist.csv``, ``query_radius.csv`` and
    ``report.json`` (summary of everything written).
    """
    os.makedirs(out_dir, exist_ok=True)
    paths = {}
    if retrieval is not None:
        paths["retrieval"] = os.path.join(out_dir, "retrieval.json")
        with open(paths["retrieval"], "w", encoding="utf-8") as fh:
            json.dump(retrieval.as_dict(), fh, indent=2, sort_keys=True)
    if selection is not None:
        paths["selection"] = os.path.join(out_dir, "selection.csv")
        _write_csv(paths["selection"], SELECTION_CSV, [[j, c] for j, c in enumerate(selection.counts)])
    if radii is not None:
        paths["radius"] = os.path.join(out_dir, "radius.csv")
        rows = [["leaf", k, v["count"], f"{v['mean']:.6g}", f"{v['std']:.6g}"] for k, v in radii.by_leaf.items()]
        rows += [["depth", k, v["count"], f"{v['mean']:.6g}", f"{v['std']:.6g}"] for k, v in radii.by_depth.items()]
        _write_csv(paths["radius"], RADIUS_CSV, rows)
        paths["radius_hist"] = os.path.join(out_dir, "radius_hist.csv")
        e = radii.bin_edges
        _write_csv(paths["radius_hist"], HIST_CSV,
                   [[f"{e[i]:.6g}", f"{e[i + 1]:.6g}", int(radii.image_hist[i]), int(radii.text_hist[i])]
                    for i in range(len(radii.image_hist))])
        paths["query_radius"] = os.path.join(out_dir, "query_radius.csv")
        n_q = radii.query_radius.shape[1] if radii.query_radius.ndim == 2 else 0
        _write_csv(paths["query_radius"], ["example"] + [f"q{j}" for j in range(n_q)] + ["text"],
                   [[i] + [f"{r:.6g}" for r in radii.query_radius[i]] + [f"{radii.text_radius[i]:.6g}"]
                    for i in range(len(radii.text_radius))])
    # sections from earlier calls on the same directory are kept
    paths["summary"] = os.path.join(out_dir, "report.json")
    summary = {}
    if os.path.exists(paths["summary"]):
        with open(paths["summary"], encoding="utf-8") as fh:
            summary = json.load(fh)
    summary.update(summary_dict(retrieval, selection, radii))
    with open(paths["summary"], "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
    return paths


def read_report(out_dir) -> dict:
    """Load and validate what :func:`emit_report` wrote."""
    with open(os.path.join(out_dir, "report.json"), encoding="utf-8") as fh:
        summary = json.load(fh)
    if "retrieval" in summary:
        ret = summary["retrieval"]
        for prefix in ("TR", "IR"):
            vals = [ret[f"{prefix}@{k}"] for k in KS]
            if not all(0 <= v <= 100 for v in vals) or vals != sorted(vals):
                raise ValueError(f"invalid {prefix} values {vals}")
        with open(os.path.join(out_dir, "retrieval.json"), encoding="utf-8") as fh:
            if json.load(fh) != ret:
                raise ValueError("retrieval.json disagrees with report.json")
    if "selection" in summary:
        rows = _read_csv(os.path.join(out_dir, "selection.csv"), SELECTION_CSV)
        if [int(r[1]) for r in rows] != summary["selection"]["counts"]:
            raise ValueError("selection.csv disagrees with report.json")
    if "radius" in summary:
        rows = _read_csv(os.path.join(out_dir, "radius.csv"), RADIUS_CSV)
        summary["radius_rows"] = rows
    return summary
