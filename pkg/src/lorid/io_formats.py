"""Persistence: binary tensor container, CSV emission, run configs, datasets.

The tensor container ("LTEN") is deliberately minimal and normative down to
the byte: 4-byte magic, u16 format version, u16 ndim, ndim u64 dims, then the
payload as little-endian IEEE-754 doubles in row-major order.  Everything
float is 64-bit — the bound checks need the precision, and a second payload
width would double the format surface for nothing.  Multi-array objects
(fitted bases, trained networks) are stored as a fixed sequence of LTEN
blocks in one file.

Run configuration is plain ``key=value`` text with a closed key set: unknown
keys are errors, not warnings, so a typo cannot silently fall back to a
default.  Dataset generators are deterministic functions of their seed.
"""

from __future__ import annotations

import io
import struct
from dataclasses import dataclass, replace
from typing import BinaryIO, Iterable, Sequence

import numpy as np

from . import _nn
from .attacks import ToyClassifier
from .diffusion import MlpDenoiser
from .tucker import TensorizationLayout, TuckerBasis

__all__ = [
    "TENSOR_MAGIC",
    "TENSOR_VERSION",
    "TensorFormatError",
    "write_tensor",
    "read_tensor",
    "write_csv",
    "RunConfig",
    "ConfigError",
    "parse_config",
    "format_config",
    "default_config",
    "write_basis",
    "read_basis",
    "write_mlp",
    "read_mlp",
    "write_classifier",
    "read_classifier",
    "gen_gaussian_dataset",
    "gen_two_gaussian_classes",
    "gen_two_point_dataset",
    "gen_striped_images",
]

TENSOR_MAGIC = b"LTEN"
TENSOR_VERSION = 1
_MAX_ELEMENTS = 1 << 40  # refuse absurd allocations before they happen


class TensorFormatError(ValueError):
    """Malformed or unreadable tensor container."""


def _write_block(fh: BinaryIO, x: np.ndarray) -> None:
    arr = np.asarray(x, dtype="<f8")
    if arr.ndim:  # ascontiguousarray would promote 0-dim to shape (1,)
        arr = np.ascontiguousarray(arr)
    fh.write(TENSOR_MAGIC)
    fh.write(struct.pack("<HH", TENSOR_VERSION, arr.ndim))
    fh.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
    fh.write(arr.tobytes(order="C"))


def _read_exact(fh: BinaryIO, n: int, what: str) -> bytes:
    data = fh.read(n)
    if len(data) != n:
        raise TensorFormatError(f"truncated file: expected {n} bytes of {what}, got {len(data)}")
    return data


def _read_block(fh: BinaryIO) -> np.ndarray:
    magic = _read_exact(fh, 4, "magic")
    if magic != TENSOR_MAGIC:
        raise TensorFormatError(f"bad magic {magic!r}, expected {TENSOR_MAGIC!r}")
    version, ndim = struct.unpack("<HH", _read_exact(fh, 4, "header"))
    if version > TENSOR_VERSION:
        raise TensorFormatError(f"format version {version} is newer than supported {TENSOR_VERSION}")
    dims = struct.unpack(f"<{ndim}Q", _read_exact(fh, 8 * ndim, "dims")) if ndim else ()
    count = 1
    for d in dims:
        count *= d
        if count > _MAX_ELEMENTS:
            raise TensorFormatError(f"dimension overflow: {dims}")
    payload = _read_exact(fh, 8 * count, "payload")
    return np.frombuffer(payload, dtype="<f8").reshape(dims).copy()


def write_tensor(path_or_file: str | BinaryIO, x: np.ndarray) -> None:
    """Write one array as an LTEN block (to a path, or appended to a handle)."""
    if isinstance(path_or_file, (str, bytes)):
        with open(path_or_file, "wb") as fh:
            _write_block(fh, x)
    else:
        _write_block(path_or_file, x)


def read_tensor(path_or_file: str | BinaryIO) -> np.ndarray:
    """Read one LTEN block.  Reading a path demands exactly one block in the file."""
    if isinstance(path_or_file, (str, bytes)):
        with open(path_or_file, "rb") as fh:
            arr = _read_block(fh)
            if fh.read(1):
                raise TensorFormatError("trailing bytes after single-tensor payload")
        return arr
    return _read_block(path_or_file)


def write_csv(path: str, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    """Plain CSV with floats at full (%.17g) precision — byte-stable per inputs."""

    def cell(v) -> str:
        if isinstance(v, (float, np.floating)):
            return f"{float(v):.17g}"
        if isinstance(v, (int, np.integer, bool, np.bool_)):
            return str(int(v)) if not isinstance(v, (bool, np.bool_)) else str(bool(v)).lower()
        return str(v)

    with open(path, "w", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(cell(v) for v in row) + "\n")


# ---------------------------------------------------------------------------
# Run configuration.
# ---------------------------------------------------------------------------


class ConfigError(ValueError):
    """Missing, unknown, or ill-typed configuration keys."""


@dataclass(frozen=True)
class RunConfig:
    """Parsed key=value run configuration (schedule, purifier, projection, seed)."""

    T: int
    beta_start: float
    beta_end: float
    t: int
    L: int
    use_tucker: bool
    sampler: str
    skip_k: int
    patch: int
    seed: int
    eta: float | None = None
    ranks: tuple[int, int, int, int] | None = None

    def __post_init__(self) -> None:
        if (self.eta is None) == (self.ranks is None):
            raise ConfigError("exactly one of eta / ranks must be set")
        if self.sampler not in ("ancestral", "skip"):
            raise ConfigError(f"sampler must be ancestral or skip, got {self.sampler!r}")
        for name in ("T", "t", "L", "skip_k", "patch"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.eta is not None and not 0.0 < self.eta <= 1.0:
            raise ConfigError(f"eta {self.eta} outside (0, 1]")
        if self.ranks is not None and (len(self.ranks) != 4 or min(self.ranks) < 1):
            raise ConfigError(f"ranks must be four positive integers, got {self.ranks}")


_REQUIRED_KEYS = (
    "T", "beta_start", "beta_end", "t", "L", "use_tucker", "sampler", "skip_k", "patch", "seed",
)
_RANK_KEYS = ("eta", "ranks")


def _parse_bool(raw: str, key: str) -> bool:
    low = raw.strip().lower()
    if low in ("true", "1", "yes"):
        return True
    if low in ("false", "0", "no"):
        return False
    raise ConfigError(f"{key}: expected a boolean, got {raw!r}")


def parse_config(text: str) -> RunConfig:
    """Parse ``key=value`` lines ('#' comments and blank lines allowed)."""
    seen: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected key=value, got {line!r}")
        key, _, raw = stripped.partition("=")
        key, raw = key.strip(), raw.strip()
        if key not in _REQUIRED_KEYS + _RANK_KEYS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in seen:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        seen[key] = raw
    missing = [k for k in _REQUIRED_KEYS if k not in seen]
    if missing:
        raise ConfigError(f"missing required keys: {', '.join(missing)}")
    try:
        kwargs = dict(
            T=int(seen["T"]),
            beta_start=float(seen["beta_start"]),
            beta_end=float(seen["beta_end"]),
            t=int(seen["t"]),
            L=int(seen["L"]),
            use_tucker=_parse_bool(seen["use_tucker"], "use_tucker"),
            sampler=seen["sampler"],
            skip_k=int(seen["skip_k"]),
            patch=int(seen["patch"]),
            seed=int(seen["seed"]),
        )
        if "eta" in seen:
            kwargs["eta"] = float(seen["eta"])
        if "ranks" in seen:
            kwargs["ranks"] = tuple(int(r) for r in seen["ranks"].split(","))
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(f"bad value: {exc}") from exc
    return RunConfig(**kwargs)


def format_config(cfg: RunConfig) -> str:
    """Inverse of :func:`parse_config` (modulo comments and key order)."""
    lines = [
        f"T={cfg.T}",
        f"beta_start={cfg.beta_start:.17g}",
        f"beta_end={cfg.beta_end:.17g}",
        f"t={cfg.t}",
        f"L={cfg.L}",
        f"use_tucker={'true' if cfg.use_tucker else 'false'}",
        f"sampler={cfg.sampler}",
        f"skip_k={cfg.skip_k}",
        f"patch={cfg.patch}",
        f"seed={cfg.seed}",
    ]
    if cfg.eta is not None:
        lines.append(f"eta={cfg.eta:.17g}")
    else:
        assert cfg.ranks is not None
        lines.append("ranks=" + ",".join(str(r) for r in cfg.ranks))
    return "\n".join(lines) + "\n"


def default_config(**overrides) -> RunConfig:
    """The stock laboratory configuration; keyword overrides applied on top."""
    cfg = RunConfig(
        T=1000,
        beta_start=1e-4,
        beta_end=0.02,
        t=100,
        L=4,
        use_tucker=True,
        sampler="ancestral",
        skip_k=1,
        patch=4,
        seed=0,
        eta=0.95,
    )
    return replace(cfg, **overrides) if overrides else cfg


# ---------------------------------------------------------------------------
# Multi-block containers: fitted basis, trained networks.
# ---------------------------------------------------------------------------


def write_basis(path: str, basis: TuckerBasis) -> None:
    """Basis container: layout meta, four factors, discarded energies."""
    lay = basis.layout
    with open(path, "wb") as fh:
        _write_block(fh, np.array([lay.height, lay.width, lay.channels, lay.patch], dtype=float))
        for u in basis.factors:
            _write_block(fh, u)
        _write_block(fh, np.array(basis.discarded_energy, dtype=float))


def read_basis(path: str) -> TuckerBasis:
    with open(path, "rb") as fh:
        meta = _read_block(fh)
        if meta.shape != (4,):
            raise TensorFormatError(f"bad basis meta block shape {meta.shape}")
        layout = TensorizationLayout(*(int(v) for v in meta))
        factors = tuple(_read_block(fh) for _ in range(4))
        energy = _read_block(fh)
        if fh.read(1):
            raise TensorFormatError("trailing bytes after basis container")
    return TuckerBasis(
        factors=factors,
        ranks=tuple(u.shape[1] for u in factors),
        layout=layout,
        discarded_energy=tuple(float(e) for e in energy),
    )


def _write_params(fh: BinaryIO, params: _nn.Params) -> None:
    for w, b in params:
        _write_block(fh, w)
        _write_block(fh, b)


def _read_params(fh: BinaryIO, n_layers: int) -> _nn.Params:
    params = []
    for _ in range(n_layers):
        w = _read_block(fh)
        b = _read_block(fh)
        params.append((w, b))
    return params


def write_mlp(path: str, denoiser: MlpDenoiser) -> None:
    """Denoiser container: [dim, t_total], hidden sizes, then weight/bias pairs."""
    with open(path, "wb") as fh:
        _write_block(fh, np.array([denoiser.dim, denoiser.t_total], dtype=float))
        _write_block(fh, np.array(denoiser.hidden, dtype=float))
        _write_params(fh, denoiser.params)


def read_mlp(path: str) -> MlpDenoiser:
    with open(path, "rb") as fh:
        meta = _read_block(fh)
        if meta.shape != (2,):
            raise TensorFormatError(f"bad denoiser meta block shape {meta.shape}")
        hidden = tuple(int(h) for h in _read_block(fh))
        params = _read_params(fh, len(hidden) + 1)
        if fh.read(1):
            raise TensorFormatError("trailing bytes after denoiser container")
    return MlpDenoiser(
        dim=int(meta[0]), hidden=hidden, t_total=int(meta[1]), params=params
    )


def write_classifier(path: str, clf: ToyClassifier) -> None:
    """Classifier container: [input_dim, n_classes, n_layers], then weight/bias pairs."""
    with open(path, "wb") as fh:
        _write_block(
            fh, np.array([clf.input_dim, clf.n_classes, len(clf.params)], dtype=float)
        )
        _write_params(fh, clf.params)


def read_classifier(path: str) -> ToyClassifier:
    with open(path, "rb") as fh:
        meta = _read_block(fh)
        if meta.shape != (3,):
            raise TensorFormatError(f"bad classifier meta block shape {meta.shape}")
        params = _read_params(fh, int(meta[2]))
        if fh.read(1):
            raise TensorFormatError("trailing bytes after classifier container")
    return ToyClassifier(params=params, input_dim=int(meta[0]), n_classes=int(meta[1]))


# ---------------------------------------------------------------------------
# Synthetic datasets.
# ---------------------------------------------------------------------------


def gen_gaussian_dataset(d: int, n: int, seed: int) -> np.ndarray:
    """(n, d) draws from the standard normal — the analytic-MMSE data model."""
    if d < 1 or n < 1:
        raise ValueError("d and n must be >= 1")
    rng = np.random.default_rng(seed)
    return rng.standard_normal((n, d))


def gen_two_gaussian_classes(
    n: int, seed: int, d: int = 2, separation: float = 3.0
) -> tuple[np.ndarray, np.ndarray]:
    """Balanced two-class blobs at +-separation/2 along the first axis."""
    if n < 2:
        raise ValueError("need n >= 2 for two classes")
    rng = np.random.default_rng(seed)
    y = np.arange(n) % 2
    centers = np.zeros((n, d))
    centers[:, 0] = np.where(y == 0, -separation / 2.0, separation / 2.0)
    x = centers + rng.standard_normal((n, d))
    perm = rng.permutation(n)
    return x[perm], y[perm]


def gen_two_point_dataset(n: int, seed: int) -> np.ndarray:
    """(n, 1) balanced draws from {-1, +1} — the binary-input channel model."""
    if n < 2:
        raise ValueError("need n >= 2 for both signs")
    rng = np.random.default_rng(seed)
    signs = np.where(np.arange(n) % 2 == 0, 1.0, -1.0)
    return rng.permutation(signs).reshape(n, 1)


STRIPE_SIZE = 16
STRIPE_AMP = (0.2, 0.4)


def gen_striped_images(
    n: int, seed: int, noise: float = 0.02
) -> tuple[np.ndarray, np.ndarray]:
    """Two-class 16x16x1 stripe images living in a two-direction patch subspace.

    Class 0 is a period-2 horizontal stripe pattern (rows alternate sign),
    class 1 the vertical transpose.  Each image gets a random overall sign and
    an amplitude drawn from U[0.2, 0.4], plus small Gaussian pixel noise, and
    is centered on zero so every 4x4 patch is (up to noise) proportional to a
    single per-class patch atom — the tensorized dataset's patch-pixel mode
    then concentrates >= 90% of its energy in two singular directions.
    """
    if n < 2:
        raise ValueError("need n >= 2 for both classes")
    if noise < 0:
        raise ValueError("noise must be nonnegative")
    rng = np.random.default_rng(seed)
    size = STRIPE_SIZE
    rows = np.where(np.arange(size) % 2 == 0, 1.0, -1.0)
    horizontal = np.tile(rows[:, None], (1, size))
    vertical = horizontal.T
    y = np.arange(n) % 2
    perm = rng.permutation(n)
    y = y[perm]
    amps = rng.uniform(STRIPE_AMP[0], STRIPE_AMP[1], size=n)
    signs = rng.choice([-1.0, 1.0], size=n)
    images = np.empty((n, size, size, 1))
    for i in range(n):
        base = horizontal if y[i] == 0 else vertical
        img = signs[i] * amps[i] * base
        if noise > 0:
            img = img + noise * rng.standard_normal((size, size))
        images[i, :, :, 0] = img
    return images, y
