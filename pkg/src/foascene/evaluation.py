"""Permutation-invariant scoring of scene descriptions.

A reference scene G and a hypothesis S are compared source by source after
matching. Under the optimal-source protocol (OS) one matching maximizing the
summed TupleScore serves every metric; under the optimal-metric protocol (OM)
each metric gets the matching that is best for that metric alone.
"""
from __future__ import annotations

import itertools
import math
from functools import lru_cache
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Union

import numpy as np
from scipy.optimize import linear_sum_assignment

from foascene.scene import SceneMeta, SourceMeta
from foascene.scenetext import SceneDescription, parse
from foascene.similarity import LexicalSimilarity, SimilarityProvider, normalize_tokens
from foascene.zones import zone_angle_error

PROTOCOLS = ("OS", "OM")
EXHAUSTIVE_LIMIT = 5
TIE_TOLERANCE = 1e-12

SCENE_METRICS = ("room_vol_err_log2", "rt60_err_s", "noise_sim", "count_accuracy")
SOURCE_METRICS = (
    "tuple_score", "source_sim", "wer", "dir_acc_xyz", "dir_acc_xy", "dir_acc_z",
    "zone_err_deg", "distance_err_ratio", "time_iou", "loudness_err_db", "c50_err_db",
)
METRICS = SCENE_METRICS + SOURCE_METRICS
# metrics where smaller is better
ERROR_METRICS = frozenset({
    "room_vol_err_log2", "rt60_err_s", "wer", "zone_err_deg",
    "distance_err_ratio", "loudness_err_db", "c50_err_db",
})
# column headings used by the summary tables
TABLE_COLUMNS = {
    "room_vol_err_log2": "RoomVol ErrLog2",
    "rt60_err_s": "RT60 Err (s)",
    "noise_sim": "Noise Sim",
    "count_accuracy": "Count Accuracy",
    "tuple_score": "Tuple Score",
    "source_sim": "Source Sim",
    "wer": "WER",
    "dir_acc_xyz": "Direction Accuracy XYZ",
    "dir_acc_xy": "Direction Accuracy XY",
    "dir_acc_z": "Direction Accuracy Z",
    "zone_err_deg": "Zone Err (deg)",
    "distance_err_ratio": "Distance ErrRatio",
    "time_iou": "Time IoU",
    "loudness_err_db": "Loudness Err (dB)",
    "c50_err_db": "C50 Err (dB)",
}


# ---------------------------------------------------------------- primitives


def interval_iou(g_on: float, g_off: float, s_on: float, s_off: float) -> float:
    """Intersection over union of two time intervals; 0 when the union is empty."""
    intersection = max(0.0, min(g_off, s_off) - max(g_on, s_on))
    union = (g_off - g_on) + (s_off - s_on) - intersection
    if union <= 0.0:
        return 0.0
    return intersection / union


def word_error_rate(ref_text: str, hyp_text: str) -> float:
    """Word-level Levenshtein distance over normalized tokens divided by the reference length.

    An empty reference scores the number of hypothesis words (0 when both are empty).
    """
    ref, hyp = normalize_tokens(ref_text), normalize_tokens(hyp_text)
    if not ref:
        return float(len(hyp))
    previous = list(range(len(hyp) + 1))
    for i, r in enumerate(ref, start=1):
        current = [i] + [0] * len(hyp)
        for j, h in enumerate(hyp, start=1):
            current[j] = min(previous[j] + 1, current[j - 1] + 1, previous[j - 1] + (r != h))
        previous = current
    return previous[-1] / len(ref)


def uses_wer(g: SourceMeta, s: SourceMeta) -> bool:
    """WER drives What only for a speech reference transcribed by the hypothesis in the same language."""
    return bool(g.is_speech and g.label and s.is_speech and s.language == g.language and s.label)


def what_score(g: SourceMeta, s: SourceMeta, provider: SimilarityProvider) -> float:
    if uses_wer(g, s):
        return max(0.0, 1.0 - word_error_rate(g.label, s.label))
    if not g.label or not s.label:
        return 0.0
    return provider.similarity(g.label, s.label)


def where_score(g: SourceMeta, s: SourceMeta) -> float:
    if g.zone is None or s.zone is None:
        return 0.0
    return (180.0 - zone_angle_error(g.zone, s.zone)) / 180.0


def when_score(g: SourceMeta, s: SourceMeta) -> float:
    if None in (g.onset_s, g.offset_s, s.onset_s, s.offset_s):
        return 0.0
    if s.offset_s < s.onset_s:
        return 0.0
    return interval_iou(g.onset_s, g.offset_s, s.onset_s, s.offset_s)


def tuple_score(g: SourceMeta, s: SourceMeta, what_scorer: Union[SimilarityProvider, Callable, None] = None) -> float:
    """Geometric mean of What, Where and When for one pair; a missing attribute zeroes its factor."""
    what = _what(g, s, what_scorer)
    factors = (what, where_score(g, s), when_score(g, s))
    if min(factors) <= 0.0:
        return 0.0
    return float(np.clip((factors[0] * factors[1] * factors[2]) ** (1.0 / 3.0), 0.0, 1.0))


def _what(g, s, what_scorer) -> float:
    if what_scorer is None:
        what_scorer = LexicalSimilarity()
    if isinstance(what_scorer, SimilarityProvider):
        return what_score(g, s, what_scorer)
    return float(what_scorer(g, s))


# ----------------------------------------------------------------- matching


@dataclass(frozen=True)
class Matching:
    """One-to-one pairing between reference and hypothesis sources.

    ``sequence`` lists, for the smaller side in index order, the index chosen
    on the larger side; ties between equally good matchings are broken by the
    lexicographically smallest sequence.
    """

    pairs: tuple
    n_ref: int
    n_hyp: int

    @property
    def sequence(self) -> tuple:
        if self.n_ref <= self.n_hyp:
            return tuple(j for _, j in sorted(self.pairs))
        return tuple(i for i, _ in sorted(self.pairs, key=lambda p: p[1]))

    @property
    def unmatched_ref(self) -> tuple:
        used = {i for i, _ in self.pairs}
        return tuple(i for i in range(self.n_ref) if i not in used)

    @property
    def unmatched_hyp(self) -> tuple:
        used = {j for _, j in self.pairs}
        return tuple(j for j in range(self.n_hyp) if j not in used)

    @classmethod
    def from_sequence(cls, sequence: Sequence[int], n_ref: int, n_hyp: int) -> "Matching":
        if n_ref <= n_hyp:
            pairs = tuple((i, int(j)) for i, j in enumerate(sequence))
        else:
            pairs = tuple(sorted((int(i), j) for j, i in enumerate(sequence)))
        return cls(pairs=pairs, n_ref=n_ref, n_hyp=n_hyp)

    def to_dict(self) -> dict:
        return {
            "pairs": [list(p) for p in self.pairs],
            "unmatched_ref": list(self.unmatched_ref),
            "unmatched_hyp": list(self.unmatched_hyp),
        }


def _oriented(scores: np.ndarray) -> np.ndarray:
    """Score matrix with the smaller side as rows."""
    return scores if scores.shape[0] <= scores.shape[1] else scores.T


def _sequence_total(matrix: np.ndarray, sequence: Sequence[int]) -> float:
    total = 0.0
    for row, col in enumerate(sequence):
        total += matrix[row, col]
    return total


def _exhaustive(matrix: np.ndarray) -> tuple:
    rows, cols = matrix.shape
    best, best_total = None, -math.inf
    for sequence in itertools.permutations(range(cols), rows):
        total = _sequence_total(matrix, sequence)
        if total > best_total + TIE_TOLERANCE:
            best, best_total = sequence, total
    return tuple(best)


def _assignment_value(matrix: np.ndarray) -> float:
    if matrix.shape[0] == 0:
        return 0.0
    r, c = linear_sum_assignment(matrix, maximize=True)
    return float(matrix[r, c].sum())


def _assignment(matrix: np.ndarray) -> tuple:
    """Optimal assignment with the lexicographic tie-break.

    Rows are fixed one at a time to the smallest column that still admits an
    optimal completion (within the tie tolerance).
    """
    rows, cols = matrix.shape
    optimum = _assignment_value(matrix)
    chosen: List[int] = []
    prefix = 0.0
    for row in range(rows):
        free = [c for c in range(cols) if c not in chosen]
        for col in free:
            rest_cols = [c for c in free if c != col]
            rest = matrix[row + 1:][:, rest_cols]
            value = prefix + matrix[row, col] + _assignment_value(rest)
            if value >= optimum - TIE_TOLERANCE:
                chosen.append(col)
                prefix += matrix[row, col]
                break
        else:  # pragma: no cover - numerical safety net
            col = free[int(np.argmax(matrix[row, free]))]
            chosen.append(col)
            prefix += matrix[row, col]
    return tuple(chosen)


def solve_matching(scores: np.ndarray, method: str = "auto") -> Matching:
    """Matching of ``min(n_ref, n_hyp)`` pairs maximizing the summed ``scores[ref, hyp]``.

    ``method`` is ``exhaustive``, ``assignment`` or ``auto`` (exhaustive up to
    five sources on both sides, assignment solver above).
    """
    scores = np.asarray(scores, dtype=float)
    n_ref, n_hyp = scores.shape
    matrix = _oriented(scores)
    if matrix.shape[0] == 0:
        return Matching(pairs=(), n_ref=n_ref, n_hyp=n_hyp)
    if method == "auto":
        method = "exhaustive" if max(n_ref, n_hyp) <= EXHAUSTIVE_LIMIT else "assignment"
    if method == "exhaustive":
        sequence = _exhaustive(matrix)
    elif method == "assignment":
        sequence = _assignment(matrix)
    else:
        raise ValueError(f"unknown matching method {method!r}")
    return Matching.from_sequence(sequence, n_ref, n_hyp)


def tuple_matrix(ref: Sequence[SourceMeta], hyp: Sequence[SourceMeta], what_scorer=None) -> np.ndarray:
    provider = what_scorer if what_scorer is not None else LexicalSimilarity()
    if isinstance(provider, SimilarityProvider):
        provider.prefetch([s.label for s in list(ref) + list(hyp) if s.label])
    return np.array([[tuple_score(g, s, provider) for s in hyp] for g in ref], dtype=float).reshape(len(ref), len(hyp))


def find_permutation_os(ref: Sequence[SourceMeta], hyp: Sequence[SourceMeta], what_scorer=None,
                        method: str = "auto") -> Matching:
    """Matching maximizing total TupleScore."""
    return solve_matching(tuple_matrix(ref, hyp, what_scorer), method)


# ----------------------------------------------------------- pair metrics


@dataclass
class PairTables:
    """Per-pair metric values (NaN where a pair does not count) for every source metric."""

    values: Dict[str, np.ndarray]
    n_ref: int
    n_hyp: int
    averaging: str = "max"

    def aggregate(self, metric: str, pairs: Sequence[tuple]) -> Optional[float]:
        table = self.values[metric]
        if metric == "tuple_score":
            denom = max(self.n_ref, self.n_hyp) if self.averaging == "max" else self.n_ref
            if denom == 0:
                return 1.0 if self.n_ref == self.n_hyp == 0 else 0.0
            total = 0.0
            for i, j in sorted(pairs):
                total += float(table[i, j])
            return total / denom
        picked = [float(table[i, j]) for i, j in sorted(pairs) if not math.isnan(table[i, j])]
        if not picked:
            return None
        total = 0.0
        for v in picked:
            total += v
        return total / len(picked)


def pair_tables(ref: Sequence[SourceMeta], hyp: Sequence[SourceMeta], provider: SimilarityProvider,
                averaging: str = "max") -> PairTables:
    m, n = len(ref), len(hyp)
    nan = math.nan
    values = {name: np.full((m, n), nan) for name in SOURCE_METRICS}
    for i, g in enumerate(ref):
        for j, s in enumerate(hyp):
            values["tuple_score"][i, j] = tuple_score(g, s, provider)
            values["source_sim"][i, j] = provider.similarity(g.label, s.label) if g.label and s.label else 0.0
            if g.is_speech and s.is_speech and g.label and s.label:
                values["wer"][i, j] = word_error_rate(g.label, s.label)
            if g.zone is not None:
                same_zone = s.zone is not None and s.zone == g.zone
                values["dir_acc_xyz"][i, j] = float(same_zone)
                values["dir_acc_z"][i, j] = float(s.zone is not None and s.zone.band == g.zone.band)
                if not g.zone.is_polar:
                    values["dir_acc_xy"][i, j] = float(
                        s.zone is not None and not s.zone.is_polar and s.zone.octant == g.zone.octant
                    )
                if s.zone is not None:
                    values["zone_err_deg"][i, j] = zone_angle_error(g.zone, s.zone)
            if g.distance_m and s.distance_m is not None:
                values["distance_err_ratio"][i, j] = abs(s.distance_m - g.distance_m) / g.distance_m
            values["time_iou"][i, j] = when_score(g, s)
            if g.loudness_dba is not None and s.loudness_dba is not None:
                values["loudness_err_db"][i, j] = abs(s.loudness_dba - g.loudness_dba)
            if g.c50_db is not None and s.c50_db is not None:
                values["c50_err_db"][i, j] = abs(s.c50_db - g.c50_db)
    return PairTables(values=values, n_ref=m, n_hyp=n, averaging=averaging)


@lru_cache(maxsize=128)
def _sequences(n_ref: int, n_hyp: int) -> np.ndarray:
    """Every matching sequence for the given sizes, in lexicographic order, as (count, k) ints."""
    k = min(n_ref, n_hyp)
    seqs = np.array(list(itertools.permutations(range(max(n_ref, n_hyp)), k)), dtype=np.intp)
    return seqs.reshape(-1, k)


def _matching_values(tables: "PairTables", metric: str) -> np.ndarray:
    """Aggregate of ``metric`` for every matching in ``_sequences`` order; NaN where absent."""
    table = tables.values[metric]
    m, n = table.shape
    seqs = _sequences(m, n)
    oriented = table if m <= n else table.T
    rows = np.arange(seqs.shape[1])[None, :]
    picked = oriented[rows, seqs]
    if metric == "tuple_score":
        denom = max(m, n) if tables.averaging == "max" else m
        if denom == 0:
            return np.full(len(seqs), 1.0 if m == n == 0 else 0.0)
        return picked.sum(axis=1) / denom
    valid = ~np.isnan(picked)
    counts = valid.sum(axis=1)
    sums = np.where(valid, picked, 0.0).sum(axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(counts > 0, sums / np.maximum(counts, 1), np.nan)


def find_permutation_om(ref: Sequence[SourceMeta], hyp: Sequence[SourceMeta], metric: str,
                        what_scorer=None, tables: Optional[PairTables] = None,
                        start: Optional[Matching] = None) -> Matching:
    """Matching that optimizes ``metric`` alone (maximize scores, minimize errors).

    Every matching is evaluated. The result stays at ``start`` (by default
    the OS matching) unless some matching is strictly better; among the
    best ones the lexicographically first is taken. OM therefore never
    reports a value worse than OS, and both agree on TupleScore.
    """
    if metric not in SOURCE_METRICS:
        raise ValueError(f"{metric!r} is not a per-source metric")
    provider = what_scorer if what_scorer is not None else LexicalSimilarity()
    if tables is None:
        tables = pair_tables(ref, hyp, provider)
    if start is None:
        start = solve_matching(tables.values["tuple_score"])
    m, n = len(ref), len(hyp)
    if min(m, n) == 0:
        return start
    values = _matching_values(tables, metric)
    if np.all(np.isnan(values)):
        return start
    sign = -1.0 if metric in ERROR_METRICS else 1.0
    goal = np.where(np.isnan(values), -np.inf, sign * values)
    best = float(goal.max())
    incumbent = tables.aggregate(metric, start.pairs)
    if incumbent is not None and not best > sign * incumbent + TIE_TOLERANCE:
        return start
    first = int(np.flatnonzero(goal >= best - TIE_TOLERANCE)[0])
    return Matching.from_sequence(_sequences(m, n)[first], m, n)


# ----------------------------------------------------------------- reports


@dataclass
class ScoreReport:
    protocol: str
    provider: str
    metrics: Dict[str, Optional[float]]
    matching: Dict[str, dict]
    n_src_ref: int
    n_src_hyp: int
    parse_warnings: List[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "protocol": self.protocol,
            "provider": self.provider,
            "metrics": dict(self.metrics),
            "matching": self.matching,
            "n_src_ref": self.n_src_ref,
            "n_src_hyp": self.n_src_hyp,
            "parse_warnings": list(self.parse_warnings),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ScoreReport":
        return cls(
            protocol=data["protocol"],
            provider=data["provider"],
            metrics=dict(data["metrics"]),
            matching=data.get("matching", {}),
            n_src_ref=data["n_src_ref"],
            n_src_hyp=data["n_src_hyp"],
            parse_warnings=list(data.get("parse_warnings", [])),
        )


def scene_metrics(ref: SceneMeta, hyp: SceneMeta, provider: SimilarityProvider) -> Dict[str, Optional[float]]:
    out: Dict[str, Optional[float]] = {}
    if ref.room_volume_m3 and hyp.room_volume_m3 and hyp.room_volume_m3 > 0:
        out["room_vol_err_log2"] = abs(math.log2(hyp.room_volume_m3 / ref.room_volume_m3))
    else:
        out["room_vol_err_log2"] = None
    if ref.rt60_s is not None and hyp.rt60_s is not None:
        out["rt60_err_s"] = abs(hyp.rt60_s - ref.rt60_s)
    else:
        out["rt60_err_s"] = None
    if ref.noise_label and hyp.noise_label:
        out["noise_sim"] = provider.similarity(ref.noise_label, hyp.noise_label)
    else:
        out["noise_sim"] = 0.0
    out["count_accuracy"] = float(hyp.n_src is not None and hyp.n_src == ref.n_src)
    return out


def _content_key(source: SourceMeta) -> tuple:
    def opt(value):
        return (1, 0.0) if value is None else (0, value)

    return (
        source.label,
        source.language or "",
        opt(source.onset_s),
        opt(source.offset_s),
        opt(None if source.zone is None else source.zone.index),
        opt(source.distance_m),
        opt(source.loudness_dba),
        opt(source.c50_db),
    )


def _original_indices(matching: Matching, order: Sequence[int]) -> dict:
    pairs = sorted((i, order[j]) for i, j in matching.pairs)
    return Matching(pairs=tuple(pairs), n_ref=matching.n_ref, n_hyp=matching.n_hyp).to_dict()


def score_scene(
    ref: SceneMeta,
    hyp: Union[SceneDescription, SceneMeta, str, bytes],
    protocol: str = "OS",
    what_scorer: Optional[SimilarityProvider] = None,
    averaging: str = "max",
    method: str = "auto",
) -> ScoreReport:
    """Score one hypothesis against its reference scene.

    Unparsable hypotheses are scored as scenes with no sources, i.e. every
    reference source is missed. ``averaging`` selects the TupleScore
    denominator: ``max`` (max of both counts) or ``ref`` (reference count).
    """
    protocol = protocol.upper()
    if protocol not in PROTOCOLS:
        raise ValueError(f"protocol must be one of {PROTOCOLS}")
    if averaging not in ("max", "ref"):
        raise ValueError("averaging must be 'max' or 'ref'")
    warnings: List[str] = []
    if isinstance(hyp, (str, bytes)):
        hyp = parse(hyp)
    if isinstance(hyp, SceneDescription):
        warnings = [f"{type(w).__name__}: {w}" for w in hyp.parse_warnings]
        hyp_scene = hyp.parsed
    else:
        hyp_scene = hyp
    provider = what_scorer if what_scorer is not None else LexicalSimilarity()
    ref_sources = list(ref.sources)
    # matching runs on a content-sorted copy of the hypothesis so that its
    # source order cannot influence tie-breaks; indices are mapped back below
    order = sorted(range(len(hyp_scene.sources)), key=lambda j: _content_key(hyp_scene.sources[j]))
    hyp_sources = [hyp_scene.sources[j] for j in order]
    provider.prefetch([s.label for s in ref_sources + hyp_sources if s.label]
                      + [t for t in (ref.noise_label, hyp_scene.noise_label) if t])

    metrics = scene_metrics(ref, hyp_scene, provider)
    tables = pair_tables(ref_sources, hyp_sources, provider, averaging)
    os_matching = solve_matching(tables.values["tuple_score"], method)
    matchings = {"OS": _original_indices(os_matching, order)}
    for metric in SOURCE_METRICS:
        if protocol == "OM":
            chosen = find_permutation_om(ref_sources, hyp_sources, metric, provider, tables, os_matching)
            if chosen != os_matching:
                matchings[metric] = _original_indices(chosen, order)
        else:
            chosen = os_matching
        metrics[metric] = tables.aggregate(metric, chosen.pairs)
    return ScoreReport(
        protocol=protocol,
        provider=getattr(provider, "kind", type(provider).__name__),
        metrics={name: metrics[name] for name in METRICS},
        matching=matchings,
        n_src_ref=len(ref_sources),
        n_src_hyp=len(hyp_sources),
        parse_warnings=warnings,
    )


# ------------------------------------------------------------------ corpus


def summarize(reports: Sequence[ScoreReport], group_by: Optional[str] = None,
              groups: Sequence[int] = ()) -> dict:
    """Mean and standard deviation per metric over clips, skipping absent values.

    With ``group_by="n_src"`` an extra block per reference source count is
    added; counts listed in ``groups`` get a block even when no clip has them.
    """
    def block(items: Sequence[ScoreReport]) -> dict:
        out = {"clips": len(items)}
        for metric in METRICS:
            values = [r.metrics.get(metric) for r in items]
            values = [float(v) for v in values if v is not None]
            if values:
                arr = np.array(values)
                out[metric] = {"mean": float(arr.mean()), "std": float(arr.std()), "count": len(values)}
            else:
                out[metric] = {"mean": None, "std": None, "count": 0}
        return out

    summary = {"all": block(reports)}
    if group_by is not None:
        if group_by != "n_src":
            raise ValueError("only grouping by n_src is supported")
        buckets: Dict[int, list] = {int(k): [] for k in groups}
        for report in reports:
            buckets.setdefault(report.n_src_ref, []).append(report)
        summary["by_n_src"] = {str(k): block(v) for k, v in sorted(buckets.items())}
    return summary


def evaluate_corpus(
    refs: Dict[str, SceneMeta],
    hyps: Dict[str, str],
    protocol: str = "OS",
    what_scorer: Optional[SimilarityProvider] = None,
    averaging: str = "max",
    workers: int = 1,
) -> Dict[str, ScoreReport]:
    """Score every reference clip; a clip without hypothesis text counts as all-miss.

    Results are keyed and ordered by clip id, so the outcome does not depend
    on ``workers``. Threads are used because the similarity provider (and its
    cache) is shared.
    """
    ids = sorted(refs)

    def run(clip_id):
        return score_scene(refs[clip_id], hyps.get(clip_id, ""), protocol, what_scorer, averaging)

    if workers <= 1:
        results = [run(i) for i in ids]
    else:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run, ids))
    return dict(zip(ids, results))
