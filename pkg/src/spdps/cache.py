"""Binary stage caches shared by the pipeline and the CLI.

Every artifact kind uses one container: a 4-byte magic, a format
version byte, a kind byte, then little-endian 64-bit payload fields
(unsigned counts, row-major float arrays, signed labels).  Files are
deterministic for equal inputs, so cache bytes can be compared directly.

Grams are stored without their training references and projections
without their fitted gram; callers re-attach those via ``with_refs`` /
``with_gram`` when a stage needs to embed new queries.
"""

from __future__ import annotations

import numpy as np

from .discriminant import DiscriminantModel
from .dictionary import DpsDictionary
from .kernel_space import KernelGram
from .projection import VARIANTS, ProjectionModel
from .spd_core import SpdMatrix

MAGIC = b"SPDC"
VERSION = 1

KINDS = {"descriptors": 1, "gram": 2, "projection": 3, "discriminant": 4, "dictionary": 5}
_KIND_NAMES = {v: k for k, v in KINDS.items()}


class _Writer:
    def __init__(self, kind: str) -> None:
        self.parts = [MAGIC, bytes([VERSION, KINDS[kind]])]

    def counts(self, *values: int) -> None:
        self.parts.append(np.asarray(values, dtype="<u8").tobytes())

    def floats(self, array) -> None:
        self.parts.append(np.ascontiguousarray(array, dtype="<f8").tobytes())

    def ints(self, array) -> None:
        self.parts.append(np.ascontiguousarray(array, dtype="<i8").tobytes())

    def write(self, path) -> None:
        with open(path, "wb") as handle:
            handle.write(b"".join(self.parts))


class _Reader:
    def __init__(self, path, kind: str) -> None:
        with open(path, "rb") as handle:
            self.data = handle.read()
        self.path = path
        if self.data[:4] != MAGIC:
            raise ValueError(f"{path}: not a cache file (bad magic)")
        if len(self.data) < 6:
            raise ValueError(f"{path}: truncated header")
        if self.data[4] != VERSION:
            raise ValueError(f"{path}: unsupported cache version {self.data[4]}")
        found = _KIND_NAMES.get(self.data[5], f"unknown({self.data[5]})")
        if found != kind:
            raise ValueError(f"{path}: holds {found} data, expected {kind}")
        self.offset = 6

    def _take(self, dtype: str, count: int) -> np.ndarray:
        nbytes = count * np.dtype(dtype).itemsize
        if self.offset + nbytes > len(self.data):
            raise ValueError(f"{self.path}: truncated payload")
        out = np.frombuffer(self.data, dtype=dtype, count=count, offset=self.offset)
        self.offset += nbytes
        return out

    def counts(self, count: int) -> tuple[int, ...]:
        return tuple(int(v) for v in self._take("<u8", count))

    def floats(self, shape) -> np.ndarray:
        flat = self._take("<f8", int(np.prod(shape, dtype=np.int64)))
        return flat.reshape(shape).copy()

    def ints(self, count: int) -> np.ndarray:
        return self._take("<i8", count).copy()

    def done(self) -> None:
        if self.offset != len(self.data):
            raise ValueError(f"{self.path}: {len(self.data) - self.offset} trailing bytes")


def peek_kind(path) -> str:
    with open(path, "rb") as handle:
        head = handle.read(6)
    if head[:4] != MAGIC or len(head) < 6:
        raise ValueError(f"{path}: not a cache file")
    try:
        return _KIND_NAMES[head[5]]
    except KeyError:
        raise ValueError(f"{path}: unknown kind byte {head[5]}") from None


def save_descriptors(path, points, labels=None) -> None:
    """Store SPD descriptors (and optional integer labels) in one file."""
    points = list(points)
    if not points:
        raise ValueError("no descriptors to save")
    dim = points[0].dim
    writer = _Writer("descriptors")
    writer.counts(len(points), dim, 0 if labels is None else 1)
    writer.floats(np.stack([np.asarray(p) for p in points]))
    if labels is not None:
        labels = np.asarray(labels, dtype=np.int64)
        if labels.shape != (len(points),):
            raise ValueError("need one label per descriptor")
        writer.ints(labels)
    writer.write(path)


def load_descriptors(path):
    reader = _Reader(path, "descriptors")
    n, dim, has_labels = reader.counts(3)
    stack = reader.floats((n, dim, dim))
    labels = reader.ints(n) if has_labels else None
    reader.done()
    return [SpdMatrix(m) for m in stack], labels


def save_gram(path, gram: KernelGram) -> None:
    writer = _Writer("gram")
    writer.counts(gram.n)
    writer.floats([gram.sigma])
    writer.floats(gram.K)
    writer.floats(gram.K_half)
    writer.write(path)


def load_gram(path) -> KernelGram:
    reader = _Reader(path, "gram")
    (n,) = reader.counts(1)
    sigma = float(reader.floats((1,))[0])
    k = reader.floats((n, n))
    k_half = reader.floats((n, n))
    reader.done()
    return KernelGram(n=n, sigma=sigma, K=k, K_half=k_half, training_refs=None)


def save_projection(path, model: ProjectionModel) -> None:
    writer = _Writer("projection")
    n, k = model.projection.shape
    writer.counts(VARIANTS.index(model.variant), n, k, 0 if model.selector is None else 1)
    writer.floats([model.alpha, model.beta])
    writer.floats(model.projection)
    if model.selector is not None:
        writer.floats(model.selector)
    writer.write(path)


def load_projection(path) -> ProjectionModel:
    reader = _Reader(path, "projection")
    variant_code, n, k, has_selector = reader.counts(4)
    if variant_code >= len(VARIANTS):
        raise ValueError(f"{path}: unknown projection variant {variant_code}")
    alpha, beta = reader.floats((2,))
    projection = reader.floats((n, k))
    selector = reader.floats((n, k)) if has_selector else None
    reader.done()
    return ProjectionModel(
        gram=None,
        variant=VARIANTS[variant_code],
        projection=projection,
        alpha=float(alpha),
        beta=float(beta),
        selector=selector,
    )


def save_discriminant(path, model: DiscriminantModel) -> None:
    writer = _Writer("discriminant")
    writer.counts(model.coefficients.shape[0], model.r)
    writer.floats([model.beta_lagrange, model.ridge])
    writer.floats(model.coefficients)
    writer.floats(model.eigenvalues)
    writer.write(path)


def load_discriminant(path) -> DiscriminantModel:
    reader = _Reader(path, "discriminant")
    k, r = reader.counts(2)
    beta_lagrange, ridge = reader.floats((2,))
    coefficients = reader.floats((k, r))
    eigenvalues = reader.floats((r,))
    reader.done()
    return DiscriminantModel(
        coefficients=coefficients,
        r=r,
        beta_lagrange=float(beta_lagrange),
        eigenvalues=eigenvalues,
        ridge=float(ridge),
    )


def save_dictionary(path, dictionary: DpsDictionary) -> None:
    writer = _Writer("dictionary")
    writer.counts(dictionary.k, dictionary.m, dictionary.T0, dictionary.training_history.size)
    writer.floats([dictionary.lam])
    writer.floats(dictionary.atoms)
    writer.floats(dictionary.training_history)
    writer.write(path)


def load_dictionary(path) -> DpsDictionary:
    reader = _Reader(path, "dictionary")
    k, m, t0, hist = reader.counts(4)
    lam = float(reader.floats((1,))[0])
    atoms = reader.floats((k, m))
    history = reader.floats((hist,))
    reader.done()
    return DpsDictionary(atoms=atoms, T0=t0, lam=lam, training_history=history)
