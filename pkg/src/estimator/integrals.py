"""Active-space Hamiltonians: container, FCIDUMP I/O, binary persistence, basis rotation.

Two-body integrals are held densely in chemist notation, ``eri[i, j, k, l] = (ij|kl)``.
"""

from __future__ import annotations

import io
import json
import re
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Iterable

import numpy as np

__all__ = [
    "ACTIVE_SPACES",
    "ActiveSpaceTag",
    "FCIDumpError",
    "Hamiltonian",
    "SymmetryReport",
    "load_hamiltonian",
    "parse_fcidump",
    "read_fcidump",
    "rotate_basis",
    "save_hamiltonian",
    "validate_symmetry",
    "write_fcidump",
]

SYMMETRY_TOL = 1e-10
DUPLICATE_TOL = 1e-10

# (orbitals, electrons) per tier for the four heme models
ACTIVE_SPACES: dict[str, dict[str, tuple[int, int]]] = {
    "rest": {"A": (5, 5), "B": (8, 9), "C": (13, 15), "D": (20, 23), "E": (28, 31),
             "F": (40, 43), "G": (42, 45), "X": (56, 61)},
    "empty": {"A": (5, 5), "B": (8, 9), "C": (11, 13), "D": (18, 21), "E": (26, 29),
              "F": (37, 39), "G": (39, 41), "X": (55, 57)},
    "inhibited": {"A": (5, 5), "B": (9, 11), "C": (9, 17), "D": (21, 25), "E": (32, 35),
                  "F": (44, 49), "G": (46, 51), "X": (60, 67)},
    "cpd1": {"A": (5, 5), "B": (8, 11), "C": (15, 19), "D": (23, 25), "E": (31, 33),
             "F": (41, 45), "G": (43, 47), "X": (58, 63)},
}
TIERS = ("A", "B", "C", "D", "E", "F", "G", "X")


class FCIDumpError(ValueError):
    """Malformed or inconsistent FCIDUMP content."""


@dataclass(frozen=True)
class ActiveSpaceTag:
    compound: str
    tier: str = "custom"
    multiplicity: int = 1

    def __post_init__(self):
        if self.tier not in TIERS and self.tier != "custom":
            raise ValueError(f"unknown active-space tier {self.tier!r}")
        if self.multiplicity < 1:
            raise ValueError("spin multiplicity must be >= 1")

    @property
    def size(self) -> tuple[int, int] | None:
        """(orbitals, electrons) for the documented hierarchy, None otherwise."""
        return ACTIVE_SPACES.get(self.compound, {}).get(self.tier)


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=np.float64, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Hamiltonian:
    """Active-space Hamiltonian ``E_core + sum h_pq E_pq + 1/2 sum (pq|rs) ...``.

    Arrays are copied and made read-only on construction.
    """

    h: np.ndarray
    eri: np.ndarray
    e_core: float = 0.0
    n_alpha: int = 0
    n_beta: int = 0
    tag: ActiveSpaceTag | None = field(default=None)

    def __post_init__(self):
        h = _freeze(self.h)
        eri = _freeze(self.eri)
        n = h.shape[0]
        if h.shape != (n, n):
            raise ValueError(f"one-body matrix must be square, got {h.shape}")
        if eri.shape != (n, n, n, n):
            raise ValueError(f"two-body tensor must have shape {(n,) * 4}, got {eri.shape}")
        if not (np.all(np.isfinite(h)) and np.all(np.isfinite(eri)) and np.isfinite(self.e_core)):
            raise ValueError("integrals must be finite")
        if self.n_alpha < 0 or self.n_beta < 0 or self.n_alpha > n or self.n_beta > n:
            raise ValueError(f"electron counts ({self.n_alpha}, {self.n_beta}) do not fit {n} orbitals")
        object.__setattr__(self, "h", h)
        object.__setattr__(self, "eri", eri)
        object.__setattr__(self, "e_core", float(self.e_core))

    @property
    def n_orbitals(self) -> int:
        return self.h.shape[0]

    @property
    def n_electrons(self) -> int:
        return self.n_alpha + self.n_beta

    def with_eri(self, eri: np.ndarray) -> "Hamiltonian":
        """Same Hamiltonian with the two-body tensor replaced."""
        return Hamiltonian(self.h, eri, self.e_core, self.n_alpha, self.n_beta, self.tag)

    def allclose(self, other: "Hamiltonian", atol: float = 1e-12) -> bool:
        return (
            self.n_orbitals == other.n_orbitals
            and abs(self.e_core - other.e_core) <= atol
            and np.allclose(self.h, other.h, rtol=0, atol=atol)
            and np.allclose(self.eri, other.eri, rtol=0, atol=atol)
        )


# -- FCIDUMP -----------------------------------------------------------------

_HEADER_KEY = re.compile(r"([A-Za-z_][A-Za-z0-9_]*)\s*=\s*([^=]*?)(?=,?\s*[A-Za-z_][A-Za-z0-9_]*\s*=|\s*$)", re.S)


def _parse_header(text: str) -> dict[str, str]:
    body = re.sub(r"^\s*&FCI", "", text, flags=re.I)
    body = re.sub(r"(&END|/)\s*$", "", body.strip(), flags=re.I)
    return {k.upper(): v.strip().rstrip(",") for k, v in _HEADER_KEY.findall(body)}


def _canonical_pair(i: int, j: int) -> tuple[int, int]:
    return (i, j) if i >= j else (j, i)


def _canonical_quad(i: int, j: int, k: int, l: int) -> tuple[int, int, int, int]:
    a, b = _canonical_pair(i, j), _canonical_pair(k, l)
    return (*a, *b) if a >= b else (*b, *a)


def _fill_eri(eri: np.ndarray, i: int, j: int, k: int, l: int, v: float) -> None:
    for p, q, r, s in ((i, j, k, l), (j, i, k, l), (i, j, l, k), (j, i, l, k)):
        eri[p, q, r, s] = v
        eri[r, s, p, q] = v


def parse_fcidump(stream: IO[str] | Iterable[str]) -> Hamiltonian:
    """Read a Molpro-convention FCIDUMP into a dense :class:`Hamiltonian`.

    Orbital symmetry labels in the header are accepted and ignored. Records
    repeated with values agreeing to 1e-10 are tolerated (last one wins).
    """
    lines = iter(stream)
    header_lines = []
    for line in lines:
        header_lines.append(line)
        stripped = line.strip().upper()
        if stripped.endswith("&END") or stripped == "/" or stripped.endswith("/"):
            break
    else:
        raise FCIDumpError("FCIDUMP header is not terminated by &END")
    header = _parse_header(" ".join(header_lines))
    try:
        norb = int(header["NORB"])
        nelec = int(header["NELEC"])
        ms2 = int(header.get("MS2", "0"))
    except (KeyError, ValueError) as exc:
        raise FCIDumpError(f"malformed FCIDUMP header: {header}") from exc
    if norb < 1 or nelec < 0 or (nelec + ms2) % 2 or abs(ms2) > nelec:
        raise FCIDumpError(f"inconsistent header NORB={norb} NELEC={nelec} MS2={ms2}")
    n_alpha, n_beta = (nelec + ms2) // 2, (nelec - ms2) // 2
    if n_alpha > norb or n_beta > norb:
        raise FCIDumpError(f"{nelec} electrons with MS2={ms2} do not fit {norb} orbitals")

    entries: dict[tuple[int, int, int, int], float] = {}
    for lineno, line in enumerate(lines, start=len(header_lines) + 1):
        fields = line.split()
        if not fields:
            continue
        if len(fields) != 5:
            raise FCIDumpError(f"line {lineno}: expected 'value i j k l', got {line.strip()!r}")
        try:
            value = float(fields[0].replace("D", "E").replace("d", "e"))
            i, j, k, l = (int(x) for x in fields[1:])
        except ValueError as exc:
            raise FCIDumpError(f"line {lineno}: {exc}") from exc
        if any(not 0 <= x <= norb for x in (i, j, k, l)):
            raise FCIDumpError(f"line {lineno}: index out of range 1..{norb}")
        if i == 0:
            if j or k or l:
                raise FCIDumpError(f"line {lineno}: malformed index tuple {(i, j, k, l)}")
            key = (0, 0, 0, 0)
        elif k == 0:
            if j == 0 or l != 0:
                raise FCIDumpError(f"line {lineno}: malformed index tuple {(i, j, k, l)}")
            key = (*_canonical_pair(i, j), 0, 0)
        else:
            if j == 0 or l == 0:
                raise FCIDumpError(f"line {lineno}: malformed index tuple {(i, j, k, l)}")
            key = _canonical_quad(i, j, k, l)
        if key in entries and abs(entries[key] - value) > DUPLICATE_TOL:
            raise FCIDumpError(
                f"line {lineno}: conflicting duplicate for {key}: {entries[key]!r} vs {value!r}"
            )
        entries[key] = value

    h = np.zeros((norb, norb))
    eri = np.zeros((norb,) * 4)
    e_core = 0.0
    for (i, j, k, l), v in entries.items():
        if i == 0:
            e_core = v
        elif k == 0:
            h[i - 1, j - 1] = h[j - 1, i - 1] = v
        else:
            _fill_eri(eri, i - 1, j - 1, k - 1, l - 1, v)
    return Hamiltonian(h, eri, e_core, n_alpha, n_beta)


def read_fcidump(path: str | Path) -> Hamiltonian:
    with open(path) as f:
        return parse_fcidump(f)


def _fmt(v: float) -> str:
    s = format(float(v), ".17g")
    return s if any(c in s for c in ".eEn") else s + ".0"


def write_fcidump(ham: Hamiltonian, stream: IO[str] | None = None) -> str:
    """Serialize ``ham`` as FCIDUMP text; also written to ``stream`` if given.

    One record per symmetry-unique nonzero entry plus the core energy, ordered
    lexicographically on the 1-based canonical index tuple.
    """
    n = ham.n_orbitals
    records: list[tuple[tuple[int, int, int, int], float]] = [((0, 0, 0, 0), ham.e_core)]
    for i in range(n):
        for j in range(i + 1):
            if ham.h[i, j] != 0.0:
                records.append(((i + 1, j + 1, 0, 0), ham.h[i, j]))
    for i in range(n):
        for j in range(i + 1):
            for k in range(i + 1):
                for l in range(k + 1):
                    if (k, l) > (i, j):
                        continue
                    v = ham.eri[i, j, k, l]
                    if v != 0.0:
                        records.append(((i + 1, j + 1, k + 1, l + 1), v))
    records.sort(key=lambda r: r[0])

    out = io.StringIO()
    ms2 = ham.n_alpha - ham.n_beta
    out.write(f" &FCI NORB={n},NELEC={ham.n_electrons},MS2={ms2},\n")
    out.write("  ORBSYM=" + ",".join("1" for _ in range(n)) + ",\n")
    out.write("  ISYM=1,\n &END\n")
    for (i, j, k, l), v in records:
        out.write(f"{_fmt(v)} {i} {j} {k} {l}\n")
    text = out.getvalue()
    if stream is not None:
        stream.write(text)
    return text


# -- symmetry / rotation -----------------------------------------------------


@dataclass(frozen=True)
class SymmetryReport:
    max_deviation: float
    h_deviation: float
    eri_deviation: float
    tol: float

    @property
    def passed(self) -> bool:
        return self.max_deviation <= self.tol


def _eri_asymmetry(eri: np.ndarray) -> float:
    if eri.size == 0:
        return 0.0
    return float(
        max(
            np.max(np.abs(eri - eri.transpose(1, 0, 2, 3))),
            np.max(np.abs(eri - eri.transpose(0, 1, 3, 2))),
            np.max(np.abs(eri - eri.transpose(2, 3, 0, 1))),
        )
    )


def validate_symmetry(ham: Hamiltonian, tol: float = SYMMETRY_TOL) -> SymmetryReport:
    """Largest violation of h and 8-fold eri permutational symmetry (inclusive tolerance)."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    dh = float(np.max(np.abs(ham.h - ham.h.T))) if ham.h.size else 0.0
    de = _eri_asymmetry(ham.eri)
    return SymmetryReport(max(dh, de), dh, de, tol)


def rotate_basis(ham: Hamiltonian, u: np.ndarray) -> Hamiltonian:
    """Transform integrals to the orbital basis given by the columns of ``u``."""
    u = np.asarray(u, dtype=np.float64)
    n = ham.n_orbitals
    if u.shape != (n, n):
        raise ValueError(f"rotation must be {n}x{n}, got {u.shape}")
    if not np.allclose(u.T @ u, np.eye(n), rtol=0, atol=1e-10):
        raise ValueError("rotation matrix is not orthogonal")
    h = u.T @ ham.h @ u
    eri = np.einsum("pqrs,pi,qj,rk,sl->ijkl", ham.eri, u, u, u, u, optimize=True)
    return Hamiltonian(h, eri, ham.e_core, ham.n_alpha, ham.n_beta, ham.tag)


# -- binary persistence ------------------------------------------------------

_MAGIC = b"ESTHAM01"


def save_hamiltonian(ham: Hamiltonian, path: str | Path) -> None:
    """Write ``ham`` as magic + length-prefixed JSON manifest + little-endian float64 arrays."""
    manifest = {
        "format": "estimator-hamiltonian",
        "version": 1,
        "endianness": "little",
        "dtype": "float64",
        "order": "C",
        "n_orbitals": ham.n_orbitals,
        "n_alpha": ham.n_alpha,
        "n_beta": ham.n_beta,
        "e_core": ham.e_core,
        "arrays": [
            {"name": "h", "shape": list(ham.h.shape)},
            {"name": "eri", "shape": list(ham.eri.shape)},
        ],
    }
    if ham.tag is not None:
        manifest["tag"] = {"compound": ham.tag.compound, "tier": ham.tag.tier,
                           "multiplicity": ham.tag.multiplicity}
    blob = json.dumps(manifest, sort_keys=True).encode()
    with open(path, "wb") as f:
        f.write(_MAGIC)
        f.write(struct.pack("<Q", len(blob)))
        f.write(blob)
        for arr in (ham.h, ham.eri):
            f.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_hamiltonian(path: str | Path) -> Hamiltonian:
    with open(path, "rb") as f:
        if f.read(len(_MAGIC)) != _MAGIC:
            raise ValueError(f"{path} is not an estimator Hamiltonian file")
        (size,) = struct.unpack("<Q", f.read(8))
        manifest = json.loads(f.read(size))
        arrays = {}
        for spec in manifest["arrays"]:
            count = int(np.prod(spec["shape"]))
            data = np.frombuffer(f.read(8 * count), dtype="<f8", count=count)
            arrays[spec["name"]] = data.reshape(spec["shape"])
    tag = manifest.get("tag")
    return Hamiltonian(
        arrays["h"],
        arrays["eri"],
        manifest["e_core"],
        manifest["n_alpha"],
        manifest["n_beta"],
        ActiveSpaceTag(**tag) if tag else None,
    )
