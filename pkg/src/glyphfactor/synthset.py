"""Procedural compositional script: geometry, rasterization, corpus persistence.

Characters are built from a small component universe; each component is a
fixed set of strokes drawn into a layout slot. Styles are parametric (stroke
width, slant, roundness, serif, ink) plus a per-style ``local_style`` vector
that modulates individual components, so that two styles can share global
parameters while differing in component-level detail.
"""
from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import ConfigError, CorpusIOError, LayoutError, SchemaError, UnknownLabelError
from .script import Script, save_script, load_script

MANIFEST_SCHEMA = "glyphfactor-corpus-v1"

LAYOUT_KINDS: dict[str, tuple[int, ...]] = {
    "single": (1,),
    "lr": (2, 3),
    "tb": (2, 3),
    "surround": (2,),
}

# Global style archetypes; several styles share one archetype and differ only
# in their local_style vector.
ARCHETYPE_AXES = {
    "stroke_width": (2.1, 3.2),
    "slant": (-0.18, 0.18),
    "roundness": (0.15, 0.7),
    "serif": (False, True),
    "ink": (0.82, 1.0),
}

LOCAL_WIDTH_GAIN = 0.5
LOCAL_ROUNDNESS_GAIN = 0.55
SERIF_LENGTH = 2.4
EDGE_SOFTNESS = 0.85


@dataclass(frozen=True)
class SyntheticStyleParams:
    stroke_width: float
    slant: float
    roundness: float
    serif: bool
    ink: float
    local_style: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        vals = (self.stroke_width, self.slant, self.roundness, self.ink, *self.local_style)
        if not all(math.isfinite(v) for v in vals):
            raise ConfigError("style params must be finite")
        if self.stroke_width <= 0:
            raise ConfigError(f"stroke_width must be > 0, got {self.stroke_width}")
        if not -0.5 <= self.slant <= 0.5:
            raise ConfigError(f"slant must be in [-0.5, 0.5], got {self.slant}")
        if not 0.0 <= self.roundness <= 1.0:
            raise ConfigError(f"roundness must be in [0, 1], got {self.roundness}")
        if not 0.0 <= self.ink <= 1.0:
            raise ConfigError(f"ink must be in [0, 1], got {self.ink}")

    def as_dict(self) -> dict:
        return {
            "stroke_width": self.stroke_width,
            "slant": self.slant,
            "roundness": self.roundness,
            "serif": self.serif,
            "ink": self.ink,
            "local_style": list(self.local_style),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SyntheticStyleParams":
        return cls(
            stroke_width=float(d["stroke_width"]),
            slant=float(d["slant"]),
            roundness=float(d["roundness"]),
            serif=bool(d["serif"]),
            ink=float(d["ink"]),
            local_style=tuple(float(v) for v in d.get("local_style", (0.0, 0.0))),
        )


SOURCE_STYLE_PARAMS = SyntheticStyleParams(
    stroke_width=2.6, slant=0.0, roundness=0.4, serif=False, ink=1.0, local_style=(0.0, 0.0)
)


@dataclass(frozen=True)
class LayoutRule:
    kind: str
    slots: tuple[tuple[float, float, float, float], ...]

    def __post_init__(self):
        if self.kind not in LAYOUT_KINDS:
            raise LayoutError(f"unknown layout kind '{self.kind}'")
        if len(self.slots) not in LAYOUT_KINDS[self.kind]:
            raise LayoutError(f"layout '{self.kind}' cannot hold {len(self.slots)} slots")
        for box in self.slots:
            x0, y0, x1, y1 = box
            if not (0 <= x0 < x1 <= 1 and 0 <= y0 < y1 <= 1):
                raise LayoutError(f"slot box {box} outside unit square")


def layout_slots(kind: str, m: int) -> LayoutRule:
    if kind not in LAYOUT_KINDS or m not in LAYOUT_KINDS[kind]:
        raise LayoutError(f"layout '{kind}' does not support {m} components")
    if kind == "single":
        slots = ((0.10, 0.10, 0.90, 0.90),)
    elif kind == "lr":
        if m == 2:
            slots = ((0.05, 0.08, 0.48, 0.92), (0.52, 0.08, 0.95, 0.92))
        else:
            slots = (
                (0.04, 0.10, 0.34, 0.90),
                (0.36, 0.10, 0.66, 0.90),
                (0.68, 0.10, 0.96, 0.90),
            )
    elif kind == "tb":
        if m == 2:
            slots = ((0.08, 0.05, 0.92, 0.48), (0.08, 0.52, 0.92, 0.95))
        else:
            slots = (
                (0.10, 0.04, 0.90, 0.34),
                (0.10, 0.36, 0.90, 0.66),
                (0.10, 0.68, 0.90, 0.96),
            )
    else:  # surround
        slots = ((0.05, 0.05, 0.95, 0.95), (0.35, 0.35, 0.71, 0.71))
    return LayoutRule(kind=kind, slots=slots)


@lru_cache(maxsize=4096)
def component_geometry(geometry_seed: int, u: int) -> tuple[np.ndarray, float, float]:
    """Strokes of component ``u``: array (n, 3, 2) of control points in the
    unit box, plus local-style sensitivities (width, roundness) in [-1, 1]."""
    rng = np.random.default_rng([geometry_seed, u])
    lattice = np.linspace(0.08, 0.92, 5)
    n_strokes = int(rng.integers(2, 5))
    strokes = []
    for _ in range(n_strokes):
        while True:
            idx = rng.integers(0, 5, size=(3, 2))
            pts = lattice[idx]
            if (
                np.linalg.norm(pts[0] - pts[1]) > 0.15
                and np.linalg.norm(pts[1] - pts[2]) > 0.15
                and np.linalg.norm(pts[0] - pts[2]) > 0.15
            ):
                break
        strokes.append(pts)
    beta_w = float(rng.uniform(-1.0, 1.0))
    beta_r = float(rng.uniform(-1.0, 1.0))
    return np.stack(strokes), beta_w, beta_r


@lru_cache(maxsize=8)
def _pixel_grid(size: int) -> np.ndarray:
    ys, xs = np.mgrid[0:size, 0:size]
    return np.stack([xs + 0.5, ys + 0.5], axis=-1).astype(np.float64)


def _stroke_points(stroke: np.ndarray, roundness: float, n: int = 9) -> np.ndarray:
    """Blend between the sharp 2-segment polyline and its quadratic curve."""
    t = np.linspace(0.0, 1.0, n)[:, None]
    p0, p1, p2 = stroke
    poly = np.where(t < 0.5, p0 + 2 * t * (p1 - p0), p1 + (2 * t - 1) * (p2 - p1))
    bez = (1 - t) ** 2 * p0 + 2 * t * (1 - t) * p1 + t**2 * p2
    return (1 - roundness) * poly + roundness * bez


def render_glyph(
    script: Script,
    c: int,
    params: SyntheticStyleParams,
    layout: LayoutRule | None = None,
    size: int = 64,
) -> np.ndarray:
    """Rasterize character ``c`` in the given style; float32 (size, size) in [0, 1]."""
    comps = script.decompose(c)
    if layout is None:
        layout = layout_slots(script.layout_kind(c), len(comps))
    if len(layout.slots) != len(comps):
        raise LayoutError(
            f"layout has {len(layout.slots)} slots but character {c} has {len(comps)} components"
        )

    px_scale = size / 64.0
    segments: list[np.ndarray] = []
    widths: list[float] = []
    for u, box in zip(comps, layout.slots):
        strokes, beta_w, beta_r = component_geometry(script.geometry_seed, u)
        mult = math.exp(LOCAL_WIDTH_GAIN * params.local_style[0] * beta_w)
        width_px = float(np.clip(params.stroke_width * mult, 0.7, 6.0)) * px_scale
        rnd = float(np.clip(params.roundness + LOCAL_ROUNDNESS_GAIN * params.local_style[1] * beta_r, 0.0, 1.0))
        x0, y0, x1, y1 = box
        for stroke in strokes:
            pts = _stroke_points(stroke, rnd)
            pts = np.stack([x0 + pts[:, 0] * (x1 - x0), y0 + pts[:, 1] * (y1 - y0)], axis=1)
            pts[:, 0] += params.slant * (0.5 - pts[:, 1])
            pts *= size
            for a, b in zip(pts[:-1], pts[1:]):
                segments.append(np.stack([a, b]))
                widths.append(width_px)
            if params.serif:
                for end, ref in ((pts[0], pts[1]), (pts[-1], pts[-2])):
                    d = end - ref
                    norm = np.linalg.norm(d)
                    if norm < 1e-9:
                        continue
                    perp = np.array([-d[1], d[0]]) / norm
                    half = 0.5 * SERIF_LENGTH * width_px
                    segments.append(np.stack([end - perp * half, end + perp * half]))
                    widths.append(0.75 * width_px)

    canvas = np.zeros((size, size), dtype=np.float64)
    if segments:
        grid = _pixel_grid(size)
        soft = EDGE_SOFTNESS * px_scale
        for seg, w in zip(segments, widths):
            a, b = seg
            ab = b - a
            denom = float(ab @ ab)
            if denom < 1e-12:
                d = np.linalg.norm(grid - a, axis=-1)
            else:
                t = np.clip(((grid - a) @ ab) / denom, 0.0, 1.0)
                closest = a + t[..., None] * ab
                d = np.linalg.norm(grid - closest, axis=-1)
            cov = np.clip(0.5 + (w / 2 - d) / (2 * soft), 0.0, 1.0)
            np.maximum(canvas, cov, out=canvas)
    return (params.ink * canvas).astype(np.float32)


# ---------------------------------------------------------------------------
# script construction


def make_script(
    n_components: int,
    n_characters: int,
    seed: int,
    twin_fraction: float = 0.25,
    duplicate_component_rate: float = 0.05,
) -> Script:
    """Build a random script whose characters jointly use every component.

    A ``twin_fraction`` of characters reuses an existing component list under a
    different layout; at least one such twin pair always exists so that layout,
    not component identity, is what distinguishes some characters.
    """
    if n_components < 2:
        raise ConfigError(f"n_components must be >= 2, got {n_components}")
    if not 0.0 <= twin_fraction < 1.0:
        raise ConfigError(f"twin_fraction must be in [0, 1), got {twin_fraction}")
    rng = random.Random(seed)
    components = tuple(range(n_components))

    decomposition: dict[int, tuple[int, ...]] = {}
    layouts: dict[int, str] = {}
    used_keys: set[tuple[tuple[int, ...], str]] = set()

    def add_char(comps: tuple[int, ...], kind: str) -> bool:
        key = (comps, kind)
        if key in used_keys:
            return False
        cid = len(decomposition)
        decomposition[cid] = comps
        layouts[cid] = kind
        used_keys.add(key)
        return True

    # cover the universe first
    perm = list(components)
    rng.shuffle(perm)
    i = 0
    while i < len(perm):
        remaining = len(perm) - i
        m = 1 if remaining == 1 else min(rng.choice((2, 2, 3)), remaining)
        comps = tuple(perm[i : i + m])
        add_char(comps, rng.choice(_kinds_for(m)))
        i += m
    if len(decomposition) > n_characters - 2:
        raise ConfigError(
            f"n_characters={n_characters} too small to cover {n_components} components"
        )

    # guarantee one twin pair up front
    donor = rng.choice([c for c, us in decomposition.items() if len(us) >= 2])
    alt = [k for k in _kinds_for(len(decomposition[donor])) if k != layouts[donor]]
    add_char(decomposition[donor], rng.choice(alt))

    attempts = 0
    while len(decomposition) < n_characters:
        attempts += 1
        if attempts > 50 * n_characters:
            raise ConfigError("script generation stalled; increase n_components")
        if rng.random() < twin_fraction:
            donor = rng.choice(sorted(decomposition))
            comps = decomposition[donor]
            alt = [k for k in _kinds_for(len(comps)) if k != layouts[donor]]
            if not alt:
                continue
            add_char(comps, rng.choice(alt))
        else:
            m = rng.choices((1, 2, 3), weights=(0.15, 0.55, 0.30))[0]
            if m == 2 and rng.random() < duplicate_component_rate:
                u = rng.choice(components)
                comps = (u, u)
            else:
                comps = tuple(rng.sample(components, m))
            add_char(comps, rng.choice(_kinds_for(m)))

    return Script(
        components=components,
        decomposition=decomposition,
        source_style=0,
        layouts=layouts,
        geometry_seed=seed,
    )


def _kinds_for(m: int) -> list[str]:
    return [k for k, ms in LAYOUT_KINDS.items() if m in ms]


# ---------------------------------------------------------------------------
# styles, split, corpus


def sample_archetype(rng: random.Random) -> dict:
    return {name: rng.choice(values) for name, values in ARCHETYPE_AXES.items()}


def sample_style_params(rng: random.Random, archetype: dict | None = None) -> SyntheticStyleParams:
    arch = dict(archetype) if archetype is not None else sample_archetype(rng)
    local = (rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0))
    return SyntheticStyleParams(local_style=local, **arch)


def make_styles(n_styles: int, source_style: int, seed: int) -> tuple[dict[int, SyntheticStyleParams], dict[int, int]]:
    """Style table plus archetype-pair ids (source style has pair id -1)."""
    if n_styles < 4:
        raise ConfigError(f"n_styles must be >= 4, got {n_styles}")
    rng = random.Random(seed)
    params: dict[int, SyntheticStyleParams] = {}
    pair_ids: dict[int, int] = {}
    ids = [s for s in range(n_styles) if s != source_style]
    params[source_style] = SOURCE_STYLE_PARAMS
    pair_ids[source_style] = -1
    pair = 0
    for j in range(0, len(ids), 2):
        members = ids[j : j + 2]
        arch = sample_archetype(rng)
        for s in members:
            params[s] = sample_style_params(rng, arch)
            pair_ids[s] = pair if len(members) == 2 else -1
        pair += 1
    return params, pair_ids


@dataclass(frozen=True)
class CorpusSplit:
    train_styles: tuple[int, ...]
    eval_styles: tuple[int, ...]
    seen_chars: tuple[int, ...]
    unseen_chars: tuple[int, ...]

    def __post_init__(self):
        if set(self.train_styles) & set(self.eval_styles):
            raise ConfigError("train_styles and eval_styles overlap")
        if set(self.seen_chars) & set(self.unseen_chars):
            raise ConfigError("seen_chars and unseen_chars overlap")
        for name in ("train_styles", "eval_styles", "seen_chars", "unseen_chars"):
            if not getattr(self, name):
                raise ConfigError(f"{name} is empty")

    def as_dict(self) -> dict:
        return {
            "train_styles": list(self.train_styles),
            "eval_styles": list(self.eval_styles),
            "seen_chars": list(self.seen_chars),
            "unseen_chars": list(self.unseen_chars),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CorpusSplit":
        return cls(*(tuple(d[k]) for k in ("train_styles", "eval_styles", "seen_chars", "unseen_chars")))


def make_split(
    style_ids: list[int],
    pair_ids: dict[int, int],
    char_ids: list[int],
    n_eval_styles: int,
    n_unseen_chars: int,
    source_style: int,
    seed: int,
) -> CorpusSplit:
    """Deterministic split. Eval styles are whole archetype pairs so that the
    held-out styles include globally-similar pairs; the source style always
    stays in training."""
    if not 1 <= n_eval_styles <= len(style_ids) - 2:
        raise ConfigError(f"n_eval_styles={n_eval_styles} out of range for {len(style_ids)} styles")
    if not 1 <= n_unseen_chars <= len(char_ids) - 2:
        raise ConfigError(f"n_unseen_chars={n_unseen_chars} out of range for {len(char_ids)} characters")
    rng = random.Random(seed)
    pairs: dict[int, list[int]] = {}
    for s in style_ids:
        pid = pair_ids.get(s, -1)
        if pid >= 0:
            pairs.setdefault(pid, []).append(s)
    full_pairs = sorted(pid for pid, members in pairs.items() if len(members) == 2)
    rng.shuffle(full_pairs)
    eval_styles: list[int] = []
    for pid in full_pairs:
        if len(eval_styles) >= n_eval_styles:
            break
        eval_styles.extend(pairs[pid])
    eval_styles = eval_styles[:n_eval_styles]
    if len(eval_styles) < n_eval_styles:
        rest = [s for s in style_ids if s not in eval_styles and s != source_style]
        rng.shuffle(rest)
        eval_styles.extend(rest[: n_eval_styles - len(eval_styles)])
    train_styles = [s for s in style_ids if s not in eval_styles]
    unseen = sorted(rng.sample(list(char_ids), n_unseen_chars))
    seen = [c for c in char_ids if c not in set(unseen)]
    return CorpusSplit(
        train_styles=tuple(sorted(train_styles)),
        eval_styles=tuple(sorted(eval_styles)),
        seen_chars=tuple(sorted(seen)),
        unseen_chars=tuple(unseen),
    )


@dataclass
class Corpus:
    script: Script
    image_size: int
    style_params: dict[int, SyntheticStyleParams]
    images: dict[tuple[int, int], np.ndarray]
    split: CorpusSplit

    @property
    def styles(self) -> tuple[int, ...]:
        return tuple(sorted(self.style_params))

    def glyph(self, style: int, char: int) -> np.ndarray:
        try:
            return self.images[(style, char)]
        except KeyError:
            raise UnknownLabelError(f"no glyph for style={style} char={char}") from None

    def source_glyph(self, char: int) -> np.ndarray:
        return self.glyph(self.script.source_style, char)

    def __len__(self) -> int:
        return len(self.images)


def generate_corpus(script: Script, n_styles: int, image_size: int,
                    n_eval_styles: int, n_unseen_chars: int, seed: int) -> Corpus:
    if n_styles < 4:
        raise ConfigError(f"n_styles must be >= 4, got {n_styles}")
    style_params, pair_ids = make_styles(n_styles, script.source_style, seed)
    chars = list(script.characters)
    split = make_split(
        sorted(style_params), pair_ids, chars, n_eval_styles, n_unseen_chars,
        script.source_style, seed + 1,
    )
    images = {}
    for s in sorted(style_params):
        p = style_params[s]
        for c in chars:
            images[(s, c)] = render_glyph(script, c, p, size=image_size)
    return Corpus(script=script, image_size=image_size, style_params=style_params,
                  images=images, split=split)


def save_corpus(corpus: Corpus, out_dir: str | Path) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_script(corpus.script, out / "script.json")
    records = []
    for (s, c) in sorted(corpus.images):
        fname = f"{s}_{c}.png"
        arr = np.clip(np.rint(corpus.images[(s, c)] * 255.0), 0, 255).astype(np.uint8)
        Image.fromarray(arr, mode="L").save(out / fname)
        records.append({"style": s, "char": c, "file": fname})
    manifest = {
        "schema": MANIFEST_SCHEMA,
        "script_file": "script.json",
        "image_size": corpus.image_size,
        "records": records,
        "split": corpus.split.as_dict(),
        "style_params": {str(s): p.as_dict() for s, p in sorted(corpus.style_params.items())},
    }
    path = out / "manifest.json"
    path.write_text(json.dumps(manifest, indent=1, sort_keys=True))
    return path


def load_corpus(corpus_dir: str | Path) -> Corpus:
    root = Path(corpus_dir)
    manifest_path = root / "manifest.json"
    if not manifest_path.exists():
        raise CorpusIOError(f"manifest not found: {manifest_path}")
    try:
        manifest = json.loads(manifest_path.read_text())
    except json.JSONDecodeError as e:
        raise SchemaError(f"corrupt manifest {manifest_path}: {e}") from e
    if manifest.get("schema") != MANIFEST_SCHEMA:
        raise SchemaError(f"unexpected manifest schema {manifest.get('schema')!r}")
    for key in ("script_file", "image_size", "records", "split", "style_params"):
        if key not in manifest:
            raise SchemaError(f"manifest missing field '{key}'")
    script = load_script(root / manifest["script_file"])
    images = {}
    for rec in manifest["records"]:
        fpath = root / rec["file"]
        if not fpath.exists():
            raise CorpusIOError(f"image listed in manifest is missing: {fpath}")
        with Image.open(fpath) as im:
            arr = np.asarray(im.convert("L"), dtype=np.float32) / 255.0
        images[(int(rec["style"]), int(rec["char"]))] = arr
    return Corpus(
        script=script,
        image_size=int(manifest["image_size"]),
        style_params={int(s): SyntheticStyleParams.from_dict(d) for s, d in manifest["style_params"].items()},
        images=images,
        split=CorpusSplit.from_dict(manifest["split"]),
    )


def build_corpus(script: Script, n_styles: int, image_size: int, n_eval_styles: int,
                 n_unseen_chars: int, seed: int, out_dir: str | Path | None = None) -> Corpus:
    corpus = generate_corpus(script, n_styles, image_size, n_eval_styles, n_unseen_chars, seed)
    if out_dir is not None:
        save_corpus(corpus, out_dir)
    return corpus
