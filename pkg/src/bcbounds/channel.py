"""Two-receiver discrete memoryless broadcast channels p(y, z | x).

Channel files are JSON documents with the keys ``x_card``, ``y_card``,
``z_card`` and ``kernel``; ``kernel`` holds one row per input symbol,
each row listing ``y_card * z_card`` probabilities with ``y`` as the
major index. Rows may deviate from summing to one by at most
``LOAD_TOL`` (hand-written decimals); such rows are renormalized.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

ROW_TOL = 1e-12
LOAD_TOL = 1e-9


class ChannelError(ValueError):
    pass


class ChannelParseError(ChannelError):
    def __init__(self, message: str, field: str | None = None, line: int | None = None):
        where = []
        if field is not None:
            where.append(f"field {field!r}")
        if line is not None:
            where.append(f"line {line}")
        prefix = f"{', '.join(where)}: " if where else ""
        super().__init__(prefix + message)
        self.field = field
        self.line = line


@dataclass(frozen=True)
class ValidationReport:
    ok: bool
    row: int | None = None
    deviation: float = 0.0
    message: str = "ok"

    def __bool__(self):
        return self.ok


class Channel:
    """Transition kernel stored as an array of shape (x_card, y_card, z_card)."""

    __slots__ = ("kernel",)

    def __init__(self, kernel):
        k = np.array(kernel, dtype=float)
        if k.ndim != 3 or min(k.shape) < 1:
            raise ChannelError(f"kernel must have shape (x, y, z), got {k.shape}")
        k.setflags(write=False)
        self.kernel = k

    @classmethod
    def from_matrix(cls, matrix, y_card: int, z_card: int) -> "Channel":
        m = np.asarray(matrix, dtype=float)
        return cls(m.reshape(m.shape[0], y_card, z_card))

    @property
    def x_card(self) -> int:
        return self.kernel.shape[0]

    @property
    def y_card(self) -> int:
        return self.kernel.shape[1]

    @property
    def z_card(self) -> int:
        return self.kernel.shape[2]

    @property
    def matrix(self) -> np.ndarray:
        """Rows x, columns (y, z) in y-major order."""
        return self.kernel.reshape(self.x_card, -1)

    def marginal_y(self) -> np.ndarray:
        return self.kernel.sum(axis=2)

    def marginal_z(self) -> np.ndarray:
        return self.kernel.sum(axis=1)

    def __eq__(self, other):
        return isinstance(other, Channel) and np.array_equal(self.kernel, other.kernel)

    def __repr__(self):
        return f"Channel(x={self.x_card}, y={self.y_card}, z={self.z_card})"


def validate(ch: Channel, tol: float = ROW_TOL) -> ValidationReport:
    m = ch.matrix
    if not np.all(np.isfinite(m)):
        row = int(np.argwhere(~np.isfinite(m))[0, 0])
        return ValidationReport(False, row, float("nan"), f"row {row} has non-finite entries")
    for x, row in enumerate(m):
        if row.min() < 0:
            return ValidationReport(False, x, float(row.min()),
                                    f"row {x} has negative entry {row.min():.3g}")
        dev = float(row.sum() - 1.0)
        if abs(dev) > tol:
            kind = "deficit" if dev < 0 else "excess"
            return ValidationReport(False, x, dev,
                                    f"row {x} sums to {row.sum()!r} ({kind} {abs(dev):.3g})")
    return ValidationReport(True)


def make_bsc_bc(p1: float, p2: float) -> Channel:
    """Binary input, Y = X xor N1, Z = X xor N2 with independent flips."""
    for name, p in (("p1", p1), ("p2", p2)):
        if not 0.0 <= p <= 0.5:
            raise ChannelError(f"{name}={p} outside [0, 1/2]")
    by = np.array([[1 - p1, p1], [p1, 1 - p1]])
    bz = np.array([[1 - p2, p2], [p2, 1 - p2]])
    return Channel(by[:, :, None] * bz[:, None, :])


def make_blackwell() -> Channel:
    """Deterministic channel x=0 -> (0,0), x=1 -> (0,1), x=2 -> (1,1)."""
    k = np.zeros((3, 2, 2))
    for x, (y, z) in enumerate([(0, 0), (0, 1), (1, 1)]):
        k[x, y, z] = 1.0
    return Channel(k)


def make_copy(x_card: int = 2) -> Channel:
    """Both receivers see X noiselessly."""
    k = np.zeros((x_card, x_card, x_card))
    for x in range(x_card):
        k[x, x, x] = 1.0
    return Channel(k)


def save_channel(ch: Channel, path) -> None:
    doc = {
        "x_card": ch.x_card,
        "y_card": ch.y_card,
        "z_card": ch.z_card,
        "kernel": ch.matrix.tolist(),
    }
    Path(path).write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")


def _card(doc: dict, key: str) -> int:
    if key not in doc:
        raise ChannelParseError("missing", field=key)
    v = doc[key]
    if isinstance(v, bool) or not isinstance(v, int) or v < 1:
        raise ChannelParseError(f"expected a positive integer, got {v!r}", field=key)
    return v


def parse_channel(text: str) -> Channel:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ChannelParseError(exc.msg, line=exc.lineno) from None
    if not isinstance(doc, dict):
        raise ChannelParseError("top level must be an object")
    x_card, y_card, z_card = (_card(doc, k) for k in ("x_card", "y_card", "z_card"))
    rows = doc.get("kernel")
    if not isinstance(rows, list):
        raise ChannelParseError("expected a list of rows", field="kernel")
    if len(rows) != x_card:
        raise ChannelParseError(f"has {len(rows)} rows, x_card is {x_card}", field="kernel")
    matrix = np.empty((x_card, y_card * z_card))
    for x, row in enumerate(rows):
        name = f"kernel[{x}]"
        if not isinstance(row, list) or len(row) != y_card * z_card:
            raise ChannelParseError(f"expected a list of {y_card * z_card} numbers", field=name)
        for j, v in enumerate(row):
            if isinstance(v, bool) or not isinstance(v, (int, float)):
                raise ChannelParseError(f"not a number: {v!r}", field=f"{name}[{j}]")
            matrix[x, j] = v
    report = validate(Channel.from_matrix(matrix, y_card, z_card), tol=LOAD_TOL)
    if not report.ok:
        raise ChannelError(f"invalid kernel: {report.message}")
    # rows already within ROW_TOL are kept bit-for-bit
    sums = matrix.sum(axis=1)
    off = np.abs(sums - 1.0) > ROW_TOL
    matrix[off] /= sums[off, None]
    return Channel.from_matrix(matrix, y_card, z_card)


def load_channel(path) -> Channel:
    return parse_channel(Path(path).read_text(encoding="utf-8"))


def builtin_channel(spec: str) -> Channel:
    """Resolve ``copy``, ``copy:N``, ``blackwell`` or ``bsc-bc:p1,p2``."""
    name, _, arg = spec.partition(":")
    if name == "blackwell" and not arg:
        return make_blackwell()
    if name == "copy":
        return make_copy(int(arg) if arg else 2)
    if name == "bsc-bc":
        try:
            p1, p2 = (float(s) for s in arg.split(","))
        except ValueError:
            raise ChannelError(f"bsc-bc expects 'bsc-bc:p1,p2', got {spec!r}") from None
        return make_bsc_bc(p1, p2)
    raise ChannelError(f"unknown builtin channel {spec!r}")


def resolve_channel(spec: str) -> Channel:
    """A builtin shorthand, or a path to a channel file."""
    if Path(spec).is_file():
        return load_channel(spec)
    return builtin_channel(spec)
