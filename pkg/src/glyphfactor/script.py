"""Compositional script registry: decomposition table, coverage, pair sampling.

A script is a fixed universe of component ids plus a table mapping every
character id to its ordered component list. All label types are plain ints.
"""
from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    CoverageError,
    ReferenceSetError,
    SamplingError,
    SchemaError,
    UnknownLabelError,
)

ComponentLabel = int
CharacterLabel = int
StyleLabel = int

SCRIPT_SCHEMA = "glyphfactor-script-v1"

MAX_SAMPLE_RETRIES = 100


@dataclass(frozen=True)
class Script:
    """Immutable script definition.

    ``decomposition[c]`` is the ordered component list of character ``c``;
    ``layouts[c]`` names the spatial arrangement used by the renderer.
    """

    components: tuple[ComponentLabel, ...]
    decomposition: dict[CharacterLabel, tuple[ComponentLabel, ...]]
    source_style: StyleLabel
    layouts: dict[CharacterLabel, str] = field(default_factory=dict)
    geometry_seed: int = 0

    def __post_init__(self):
        universe = set(self.components)
        if len(universe) != len(self.components):
            raise SchemaError("duplicate component ids in universe")
        used: set[int] = set()
        for c, comps in self.decomposition.items():
            if len(comps) < 1:
                raise SchemaError(f"character {c} decomposes into zero components")
            for u in comps:
                if u not in universe:
                    raise SchemaError(f"character {c} lists unknown component {u}")
            used.update(comps)
        if used != universe:
            missing = sorted(universe - used)
            raise SchemaError(f"components never used by any character: {missing}")
        object.__setattr__(self, "_coverage_index", build_coverage_index(self.decomposition))

    @property
    def characters(self) -> tuple[CharacterLabel, ...]:
        return tuple(sorted(self.decomposition))

    @property
    def coverage_index(self) -> dict[ComponentLabel, frozenset[CharacterLabel]]:
        return self._coverage_index  # type: ignore[attr-defined]

    def decompose(self, c: CharacterLabel) -> tuple[ComponentLabel, ...]:
        try:
            return self.decomposition[c]
        except KeyError:
            raise UnknownLabelError(f"unknown character {c}") from None

    def coverage(self, chars: Iterable[CharacterLabel]) -> frozenset[ComponentLabel]:
        """Union of component sets over ``chars``."""
        out: set[ComponentLabel] = set()
        for c in chars:
            out.update(self.decompose(c))
        return frozenset(out)

    def layout_kind(self, c: CharacterLabel) -> str:
        self.decompose(c)
        return self.layouts.get(c, "single" if len(self.decomposition[c]) == 1 else "lr")


def build_coverage_index(
    decomposition: dict[CharacterLabel, tuple[ComponentLabel, ...]],
) -> dict[ComponentLabel, frozenset[CharacterLabel]]:
    inverted: dict[ComponentLabel, set[CharacterLabel]] = {}
    for c, comps in decomposition.items():
        for u in comps:
            inverted.setdefault(u, set()).add(c)
    return {u: frozenset(cs) for u, cs in inverted.items()}


def table_from_coverage_index(
    index: dict[ComponentLabel, frozenset[CharacterLabel]],
    decomposition: dict[CharacterLabel, tuple[ComponentLabel, ...]],
) -> dict[CharacterLabel, tuple[ComponentLabel, ...]]:
    """Re-derive the table from an inverted index, preserving stored order.

    Membership comes from the index; the original table only supplies the
    per-character component order (the index cannot store it).
    """
    members: dict[CharacterLabel, set[ComponentLabel]] = {}
    for u, chars in index.items():
        for c in chars:
            members.setdefault(c, set()).add(u)
    out = {}
    for c, comps in decomposition.items():
        ordered = tuple(u for u in comps if u in members.get(c, ()))
        out[c] = ordered
    return out


def save_script(script: Script, path: str | Path) -> None:
    payload = {
        "schema": SCRIPT_SCHEMA,
        "components": list(script.components),
        "characters": {str(c): list(us) for c, us in sorted(script.decomposition.items())},
        "source_style": script.source_style,
        "layouts": {str(c): kind for c, kind in sorted(script.layouts.items())},
        "geometry_seed": script.geometry_seed,
    }
    Path(path).write_text(json.dumps(payload, indent=1, sort_keys=True))


def load_script(path: str | Path) -> Script:
    path = Path(path)
    if not path.exists():
        raise SchemaError(f"script file not found: {path}")
    try:
        payload = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise SchemaError(f"script file {path} is not valid JSON: {e}") from e
    for key in ("components", "characters", "source_style"):
        if key not in payload:
            raise SchemaError(f"script file {path} missing field '{key}'")
    return Script(
        components=tuple(payload["components"]),
        decomposition={int(c): tuple(us) for c, us in payload["characters"].items()},
        source_style=int(payload["source_style"]),
        layouts={int(c): str(k) for c, k in payload.get("layouts", {}).items()},
        geometry_seed=int(payload.get("geometry_seed", 0)),
    )


@dataclass(frozen=True)
class ReferenceSet:
    """Few-shot references: (glyph image, character id) pairs of one target style."""

    items: tuple[tuple[np.ndarray, CharacterLabel], ...]
    style_tag: str = "ref"

    def __post_init__(self):
        if len(self.items) == 0:
            raise ReferenceSetError("reference set is empty")

    def characters(self) -> tuple[CharacterLabel, ...]:
        return tuple(c for _, c in self.items)

    def canonical(self) -> "ReferenceSet":
        """Deduplicated items in a fixed order (char id, then pixel bytes).

        Makes every consumer invariant to reference ordering and duplication.
        """
        seen: dict[tuple[int, bytes], tuple[np.ndarray, int]] = {}
        for img, c in self.items:
            key = (c, np.ascontiguousarray(img).tobytes())
            if key not in seen:
                seen[key] = (img, c)
        ordered = tuple(seen[k] for k in sorted(seen))
        return ReferenceSet(items=ordered, style_tag=self.style_tag)


def pick_reference_for_component(
    u: ComponentLabel, refs: ReferenceSet, script: Script
) -> np.ndarray:
    """Reference glyph whose character contains ``u``; lowest char id wins ties."""
    best: tuple[int, np.ndarray] | None = None
    for img, c in refs.items:
        if u in script.decompose(c) and (best is None or c < best[0]):
            best = (c, img)
    if best is None:
        raise CoverageError(f"component {u} is not covered by the reference set")
    return best[1]


@dataclass(frozen=True)
class SampledPair:
    """One training draw: labelled references plus the target (style, char)."""

    refs: tuple[tuple[StyleLabel, CharacterLabel], ...]
    target: tuple[StyleLabel, CharacterLabel]
    phase: int


def sample_training_pair(
    script: Script,
    styles: Sequence[StyleLabel],
    chars: Sequence[CharacterLabel],
    phase: int,
    ref_size: int,
    rng: random.Random,
    max_retries: int = MAX_SAMPLE_RETRIES,
) -> SampledPair:
    """Draw one (reference set, target) pair under the per-phase constraints.

    Phase 1: references share one style, the target has that style, the target
    is not a reference, and every target component occurs in some reference
    character. Phase 2: references carry distinct styles and the target style
    is drawn from the reference styles.
    """
    if phase not in (1, 2):
        raise SamplingError(f"phase must be 1 or 2, got {phase}")
    if not styles or not chars:
        raise SamplingError("empty style or character pool")

    if phase == 2:
        n = min(ref_size, len(styles))
        ref_styles = rng.sample(list(styles), n)
        while len(ref_styles) < ref_size:
            ref_styles.append(rng.choice(list(styles)))
        ref_chars = _sample_chars(chars, ref_size, rng)
        target_style = rng.choice(ref_styles)
        pool = [c for c in chars if c not in ref_chars]
        target_char = rng.choice(pool) if pool else rng.choice(list(chars))
        refs = tuple(zip(ref_styles, ref_chars))
        return SampledPair(refs=refs, target=(target_style, target_char), phase=2)

    for _ in range(max_retries):
        style = rng.choice(list(styles))
        target_char = rng.choice(list(chars))
        needed = set(script.decompose(target_char))
        ref_chars: list[CharacterLabel] = []
        covered: set[ComponentLabel] = set()
        feasible = True
        for u in sorted(needed):
            if u in covered:
                continue
            candidates = [
                c for c in script.coverage_index.get(u, ())
                if c != target_char and c in _as_set(chars) and c not in ref_chars
            ]
            if not candidates:
                feasible = False
                break
            pick = rng.choice(sorted(candidates))
            ref_chars.append(pick)
            covered.update(script.decompose(pick))
        if not feasible or len(ref_chars) > ref_size:
            continue
        filler = [c for c in chars if c != target_char and c not in ref_chars]
        rng.shuffle(filler)
        ref_chars.extend(filler[: ref_size - len(ref_chars)])
        if not needed <= script.coverage(ref_chars):
            continue
        refs = tuple((style, c) for c in ref_chars)
        return SampledPair(refs=refs, target=(style, target_char), phase=1)

    raise SamplingError(
        f"no feasible phase-1 pair after {max_retries} retries "
        f"(ref_size={ref_size}, |chars|={len(chars)})"
    )


def _sample_chars(chars: Sequence[CharacterLabel], n: int, rng: random.Random) -> list[CharacterLabel]:
    pool = list(chars)
    if n <= len(pool):
        return rng.sample(pool, n)
    return [rng.choice(pool) for _ in range(n)]


def _as_set(chars) -> set:
    # cached per call site would be nicer; pools are small enough not to matter
    return chars if isinstance(chars, set) else set(chars)
