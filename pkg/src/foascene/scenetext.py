"""Conversion between :class:`SceneMeta` and the structured scene-description text.

Canonical form (one statement per line)::

    room_volume=400; RT60=0.5; n_src=2.
    noise_label:air conditioner hum; noise_loudness=-35.
    Sound label:(time, direction, distance, loudness, C50):
    dog barking: (1.2-3.4, upper back-left, 2.3, -17, 12);
    [en] hello there: (0.0-5.0, horizontal front, 1.5, -20, 8);

Speech sources carry their language code in brackets and use the
transcription as the label. The parser is tolerant: it accepts the same
content wrapped over several lines, unit suffixes, placeholders such as
``?`` for unknown fields, and zone names in any case.
"""
from __future__ import annotations

import bisect
import re
from dataclasses import dataclass, field
from typing import List, Optional, Union

from foascene.scene import GRIDS, SceneMeta, SourceMeta, sort_sources
from foascene.zones import DirectionZone

LEGEND = "Sound label:(time, direction, distance, loudness, C50):"
FORBIDDEN_LABEL_CHARS = set(";:()\n\r")
PLACEHOLDERS = {"", "?", "-", "none", "null", "unknown", "n/a", "na", "nan"}


class ParseIssue(Exception):
    """A deviation from the canonical grammar, located by 1-based line and column."""

    fatal = False

    def __init__(self, message: str, line: int = 0, column: int = 0):
        super().__init__(f"{type(self).__name__} at {line}:{column}: {message}")
        self.message = message
        self.line = line
        self.column = column

    def __eq__(self, other):
        return (
            type(self) is type(other)
            and (self.message, self.line, self.column) == (other.message, other.line, other.column)
        )

    def __hash__(self):
        return hash((type(self).__name__, self.message, self.line, self.column))


class MalformedHeader(ParseIssue):
    fatal = True


class UnknownZoneName(ParseIssue):
    fatal = True


class UnparsableNumber(ParseIssue):
    fatal = True


class MissingField(ParseIssue):
    pass


class CountMismatch(ParseIssue):
    pass


class DroppedSource(ParseIssue):
    pass


class ExtraField(ParseIssue):
    pass


@dataclass
class SceneDescription:
    raw_text: str
    parsed: SceneMeta
    parse_warnings: List[ParseIssue] = field(default_factory=list)

    @property
    def errors(self) -> List[ParseIssue]:
        return [w for w in self.parse_warnings if w.fatal]


# ---------------------------------------------------------------- rendering


def _fmt(value: Optional[float], kind: str) -> str:
    if value is None:
        return "?"
    _, decimals = GRIDS[kind]
    text = f"{value:.{decimals}f}"
    if float(text) != value:
        text = repr(float(value))
    return "0" if text == "-0" else text


def _check_label(label: str, what: str) -> None:
    if not label or label != label.strip():
        raise ValueError(f"{what} {label!r} must be non-empty without surrounding whitespace")
    bad = FORBIDDEN_LABEL_CHARS.intersection(label)
    if bad:
        raise ValueError(f"{what} {label!r} contains reserved characters {sorted(bad)}")
    if _SPEECH_PREFIX.match(label):
        raise ValueError(f"{what} {label!r} starts with a language tag")


def render_source(source: SourceMeta) -> str:
    _check_label(source.label, "source label")
    label = source.label if source.language is None else f"[{source.language}] {source.label}"
    if source.onset_s is None or source.offset_s is None:
        time = "?"
    else:
        time = f"{_fmt(source.onset_s, 'time')}-{_fmt(source.offset_s, 'time')}"
    zone = "?" if source.zone is None else source.zone.name
    fields = [
        time,
        zone,
        _fmt(source.distance_m, "distance"),
        _fmt(source.loudness_dba, "loudness"),
        _fmt(source.c50_db, "c50"),
    ]
    return f"{label}: ({', '.join(fields)});"


def render(scene: SceneMeta, order_by: str = "loudness") -> str:
    """Serialize a scene, enumerating sources in ``order_by`` order."""
    if scene.noise_label is not None:
        _check_label(scene.noise_label, "noise label")
    n_src = "?" if scene.n_src is None else str(scene.n_src)
    lines = [
        f"room_volume={_fmt(scene.room_volume_m3, 'room_volume')}; "
        f"RT60={_fmt(scene.rt60_s, 'rt60')}; n_src={n_src}.",
        f"noise_label:{scene.noise_label or '?'}; "
        f"noise_loudness={_fmt(scene.noise_loudness_db, 'loudness')}.",
        LEGEND,
    ]
    lines.extend(render_source(s) for s in sort_sources(scene.sources, order_by))
    return "\n".join(lines) + "\n"


# ------------------------------------------------------------------ parsing

_NUMBER = r"[-+]?(?:\d+(?:\.\d*)?|\.\d+)"
_UNIT = r"(?:dB\s*\(A\)|dBFS|dBA|dB|m\^?3|m³|meters?|metres?|m|seconds?|secs?|s)(?![A-Za-z0-9])"
_LEGEND_RE = re.compile(r"sound\s*labels?\s*:?\s*\([^)]*\)\s*:?", re.IGNORECASE)
_SPEECH_PREFIX = re.compile(r"^\[\s*([A-Za-z]{2,3})\s*\]\s*")
_INTERVAL_RE = re.compile(
    rf"^\s*(?P<on>{_NUMBER})\s*s?\s*(?:-|–|—|to|~)\s*(?P<off>{_NUMBER})\s*s?\s*$",
    re.IGNORECASE,
)
_NUMERIC_RE = re.compile(rf"^\s*(?P<num>{_NUMBER})\s*(?P<unit>{_UNIT})?\s*$", re.IGNORECASE)
_HEADER_KEYS = {
    "room_volume": re.compile(r"room[_ ]?volume\s*[=:]\s*", re.IGNORECASE),
    "rt60": re.compile(r"\bRT\s*60\s*[=:]\s*", re.IGNORECASE),
    "n_src": re.compile(r"\bn[_ ]?src\s*[=:]\s*", re.IGNORECASE),
    "noise_loudness": re.compile(r"noise[_ ]?loudness\s*[=:]\s*", re.IGNORECASE),
}
_NOISE_LABEL_RE = re.compile(r"noise[_ ]?(?:label|type)\s*[=:]\s*(?P<v>[^;\n]*)", re.IGNORECASE)
_HEADER_VALUE_RE = re.compile(rf"(?P<num>{_NUMBER})(?:\s*(?P<unit>{_UNIT}))?", re.IGNORECASE)
_ENTRY_RE = re.compile(r"(?P<label>[^;()\n]*?)\s*:\s*\((?P<fields>[^()]*)\)", re.DOTALL)

_SLOTS = ("time", "zone", "distance", "loudness", "c50")
_NUMERIC_SLOTS = ("distance", "loudness", "c50")
_FIELD_NAMES = {"distance": "distance_m", "loudness": "loudness_dba", "c50": "c50_db"}


class _Locator:
    def __init__(self, text: str):
        self._starts = [0] + [m.end() for m in re.finditer("\n", text)]

    def __call__(self, offset: int) -> tuple:
        line = bisect.bisect_right(self._starts, offset) - 1
        return line + 1, offset - self._starts[line] + 1


def _to_float(text: str) -> float:
    value = float(text)
    if value != value or value in (float("inf"), float("-inf")):
        raise ValueError(text)
    return value


def _normalize_text(text: str) -> str:
    # unicode minus and non-breaking spaces show up in generated text
    return text.replace("−", "-").replace(" ", " ").replace("\r\n", "\n").replace("\r", "\n")


def _unit_slot(unit: str) -> Optional[str]:
    unit = unit.lower()
    if unit in ("m", "meter", "meters", "metre", "metres"):
        return "distance"
    if unit.replace(" ", "") in ("dba", "db(a)", "dbfs"):
        return "loudness"
    return None


def _parse_fields(fields: str, base: int, locate: _Locator, issues: list) -> dict:
    values = {}
    pointer = 0
    offset = 0
    for token in fields.split(","):
        token_offset = base + offset + (len(token) - len(token.lstrip()))
        offset += len(token) + 1
        stripped = token.strip()
        where = locate(token_offset)
        if pointer >= len(_SLOTS) and stripped.lower() not in PLACEHOLDERS:
            issues.append(ExtraField(f"unexpected field {stripped!r}", *where))
            continue
        if stripped.lower() in PLACEHOLDERS:
            pointer += 1
            continue
        interval = _INTERVAL_RE.match(stripped)
        if interval:
            try:
                onset, offset_s = _to_float(interval["on"]), _to_float(interval["off"])
            except ValueError:
                issues.append(UnparsableNumber(f"bad interval {stripped!r}", *where))
            else:
                if onset > offset_s:
                    onset, offset_s = offset_s, onset
                values["onset_s"], values["offset_s"] = onset, offset_s
            pointer = max(pointer, 1)
            continue
        numeric = _NUMERIC_RE.match(stripped)
        if numeric:
            unit = numeric["unit"] or ""
            slot = _unit_slot(unit)
            if slot is None or slot in values:
                start = max(pointer, 2)
                free = [s for s in _NUMERIC_SLOTS[start - 2:] if s not in values]
                if unit.lower().startswith("db"):
                    free = [s for s in free if s != "distance"]
                if not free:
                    issues.append(ExtraField(f"unexpected value {stripped!r}", *where))
                    continue
                slot = free[0]
            try:
                values[slot] = _to_float(numeric["num"])
            except ValueError:
                issues.append(UnparsableNumber(f"bad number {stripped!r}", *where))
            pointer = _SLOTS.index(slot) + 1
            continue
        try:
            values["zone"] = DirectionZone.from_name(stripped)
            pointer = max(pointer, 2)
            continue
        except ValueError:
            pass
        if pointer <= 1 and not re.search(r"\d", stripped):
            issues.append(UnknownZoneName(f"unknown zone {stripped!r}", *where))
            pointer = 2
        else:
            issues.append(UnparsableNumber(f"cannot read {stripped!r}", *where))
            pointer += 1
    return {_FIELD_NAMES.get(k, k): v for k, v in values.items()}


def _parse_header(header: str, locate: _Locator, issues: list) -> dict:
    found = {}
    for key, pattern in _HEADER_KEYS.items():
        m = pattern.search(header)
        if m is None:
            continue
        value = _HEADER_VALUE_RE.match(header, m.end())
        where = locate(m.end())
        if value is None:
            issues.append(UnparsableNumber(f"no numeric value for {key}", *where))
            found[key] = None
            continue
        try:
            number = _to_float(value["num"])
            found[key] = int(number) if key == "n_src" and number.is_integer() else number
        except ValueError:
            issues.append(UnparsableNumber(f"bad value for {key}", *where))
            found[key] = None
    m = _NOISE_LABEL_RE.search(header)
    if m is not None:
        label = m["v"].strip().rstrip(".").strip()
        found["noise_label"] = None if label.lower() in PLACEHOLDERS else label
    return found


def parse(text: Union[str, bytes]) -> SceneDescription:
    """Parse scene text; never raises on malformed input.

    Problems are collected as :class:`ParseIssue` instances in
    ``parse_warnings``. Source entries that cannot be read at all are dropped
    with a :class:`DroppedSource` warning.
    """
    if isinstance(text, bytes):
        text = text.decode("utf-8", errors="replace")
    raw = text
    text = _normalize_text(text)
    locate = _Locator(text)
    issues: list = []

    legend = _LEGEND_RE.search(text)
    if legend is not None:
        header, body, body_start = text[: legend.start()], text[legend.end():], legend.end()
    else:
        # without the legend, sources start after the last header statement
        header_end = 0
        for pattern in list(_HEADER_KEYS.values()) + [_NOISE_LABEL_RE]:
            for m in pattern.finditer(text):
                stop = text.find("\n", m.end())
                header_end = max(header_end, len(text) if stop < 0 else stop)
        header, body, body_start = text[:header_end], text[header_end:], header_end

    fields = _parse_header(header, locate, issues)
    header_keys = ("room_volume", "rt60", "n_src", "noise_label", "noise_loudness")
    if not any(k in fields for k in header_keys):
        issues.append(MalformedHeader("no scene header found", 1, 1))
    else:
        for key in header_keys:
            if key not in fields:
                issues.append(MissingField(f"header has no {key}", 1, 1))

    sources = []
    cursor = 0
    for m in _ENTRY_RE.finditer(body):
        _note_dropped(body[cursor:m.start()], body_start + cursor, locate, issues)
        cursor = m.end()
        label = re.sub(r"^[\s;.,]+", "", m["label"]).strip()
        label_offset = body_start + m.start("label") + (len(m["label"]) - len(m["label"].lstrip(" \t\n;.,")))
        language = None
        prefix = _SPEECH_PREFIX.match(label)
        if prefix:
            language = prefix.group(1).lower()
            label = label[prefix.end():].strip()
        if not label:
            issues.append(DroppedSource("source entry without a label", *locate(label_offset)))
            continue
        values = _parse_fields(m["fields"], body_start + m.start("fields"), locate, issues)
        sources.append(SourceMeta(label=label, language=language, **values))
    _note_dropped(body[cursor:], body_start + cursor, locate, issues)

    n_src = fields.get("n_src")
    if n_src is not None and not isinstance(n_src, int):
        issues.append(UnparsableNumber(f"n_src={n_src} is not an integer", 1, 1))
        n_src = None
    if n_src is not None and n_src != len(sources):
        issues.append(CountMismatch(f"n_src={n_src} but {len(sources)} source entries", 1, 1))

    scene = SceneMeta(
        room_volume_m3=fields.get("room_volume"),
        rt60_s=fields.get("rt60"),
        n_src=n_src,
        noise_label=fields.get("noise_label"),
        noise_loudness_db=fields.get("noise_loudness"),
        sources=tuple(sources),
    )
    return SceneDescription(raw_text=raw, parsed=scene, parse_warnings=issues)


def _note_dropped(chunk: str, offset: int, locate: _Locator, issues: list) -> None:
    for piece in re.finditer(r"[^;\n]+", chunk):
        content = piece.group().strip(" \t.,")
        if content:
            where = locate(offset + piece.start() + (len(piece.group()) - len(piece.group().lstrip())))
            issues.append(DroppedSource(f"unreadable source entry {content[:40]!r}", *where))
