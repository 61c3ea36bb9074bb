"""Versioned text formats for trajectories, dataset manifests and models.

Reals are written with 17 significant digits, which round-trips every
double exactly. Readers are strict: a record with the wrong number of fields,
a non-finite literal or an unknown version tag is a :class:`ParseError`
carrying the offending line number.
"""

import os
import re

import numpy as np

from .data import TrajectoryDataset
from .errors import ParseError
from .features import DiscreteIndicatorMap, GaussianRandomMap
from .model import BinlessOom, BinSpec, CoarseGrainedOom, Oom

__all__ = [
    "format_real",
    "parse_real",
    "write_trajectory",
    "read_trajectory",
    "write_dataset",
    "read_dataset",
    "dumps_model",
    "loads_model",
    "write_model",
    "read_model",
]

TRAJ_TAG = "#oomcraft-traj"
MANIFEST_TAG = "#oomcraft-manifest"
MODEL_TAG = "#oomcraft-model"
VERSION = "v1"

_REAL = re.compile(r"[+-]?(?:\d+(?:\.\d*)?|\.\d+)(?:[eE][+-]?\d+)?")
_UINT = re.compile(r"\d+")
_KEY = re.compile(r"[A-Za-z0-9_.\-]+")


def format_real(x):
    x = float(x)
    if not np.isfinite(x):
        raise ValueError(f"cannot write non-finite value {x!r}")
    return "%.17g" % x


def parse_real(text, line=None, path=None):
    text = text.strip()
    if not _REAL.fullmatch(text):
        raise ParseError(f"invalid real literal {text!r}", line, path)
    value = float(text)
    if not np.isfinite(value):
        raise ParseError(f"non-finite literal {text!r}", line, path)
    return value


def _row(values):
    return ",".join(format_real(v) for v in np.ravel(values))


def _parse_row(text, n, line, path=None):
    fields = text.split(",")
    if n is not None and len(fields) != n:
        raise ParseError(f"expected {n} fields, got {len(fields)}", line, path)
    return [parse_real(f, line, path) for f in fields]


def _parse_header(text, tag, line, path):
    parts = text.strip().split()
    if not parts or parts[0] != tag:
        raise ParseError(f"missing {tag} header", line, path)
    if len(parts) < 2 or parts[1] != VERSION:
        found = parts[1] if len(parts) > 1 else "none"
        raise ParseError(f"unsupported version {found!r}, expected {VERSION}", line, path)
    fields = {}
    for item in parts[2:]:
        key, sep, value = item.partition("=")
        if not sep:
            raise ParseError(f"malformed header field {item!r}", line, path)
        fields[key] = value
    return fields


def _lines(path):
    try:
        with open(path, encoding="utf-8", newline="") as fh:
            text = fh.read()
    except UnicodeDecodeError as err:
        raise ParseError(f"not valid UTF-8: {err}", None, path) from None
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    return lines


# trajectories ---------------------------------------------------------------

def _trajectory_text(traj, kind):
    traj = np.asarray(traj)
    if kind == "discrete":
        if traj.ndim != 1:
            raise ValueError("discrete trajectories must be one-dimensional")
        header = f"{TRAJ_TAG} {VERSION} kind=discrete dim=1"
        body = [str(int(v)) for v in traj]
    else:
        traj = traj.reshape(traj.shape[0], -1)
        header = f"{TRAJ_TAG} {VERSION} kind=continuous dim={traj.shape[1]}"
        body = [_row(r) for r in traj]
    return "\n".join([header] + body) + "\n"


def write_trajectory(path, traj, kind="continuous"):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(_trajectory_text(traj, kind))


def read_trajectory(path):
    """Return ``(array, kind, dim)`` from a trajectory file."""
    lines = _lines(path)
    if not lines:
        raise ParseError("empty file", 1, path)
    fields = _parse_header(lines[0], TRAJ_TAG, 1, path)
    kind = fields.get("kind")
    if kind not in ("discrete", "continuous"):
        raise ParseError(f"unknown kind {kind!r}", 1, path)
    dim_text = fields.get("dim", "")
    if not _UINT.fullmatch(dim_text) or int(dim_text) < 1:
        raise ParseError(f"invalid dim {dim_text!r}", 1, path)
    dim = int(dim_text)
    if kind == "discrete" and dim != 1:
        raise ParseError("discrete trajectories must have dim=1", 1, path)
    records = []
    for i, text in enumerate(lines[1:], start=2):
        if kind == "discrete":
            if not _UINT.fullmatch(text):
                raise ParseError(f"invalid symbol {text!r}", i, path)
            records.append(int(text))
        else:
            records.append(_parse_row(text, dim, i, path))
    if kind == "discrete":
        return np.array(records, dtype=np.int64), kind, 1
    return np.array(records, dtype=float).reshape(len(records), dim), kind, dim


# datasets -------------------------------------------------------------------

def write_dataset(directory, dataset, name="manifest.txt"):
    """Write one file per trajectory plus a manifest; returns the manifest path.

    Metadata entries become ``meta.<key>=<value>`` lines in sorted key order.
    """
    os.makedirs(directory, exist_ok=True)
    width = max(5, len(str(max(len(dataset) - 1, 0))))
    lines = [f"{MANIFEST_TAG} {VERSION}"]
    for i, traj in enumerate(dataset):
        fname = f"traj_{i:0{width}d}.txt"
        write_trajectory(os.path.join(directory, fname), traj, dataset.kind)
        lines.append(fname)
    meta = dict(dataset.metadata)
    meta.setdefault("n_aborted", str(dataset.n_aborted))
    for key in sorted(meta):
        value = str(meta[key])
        if not _KEY.fullmatch(key) or "\n" in value:
            raise ValueError(f"metadata entry {key!r} cannot be written")
        lines.append(f"meta.{key}={value}")
    path = os.path.join(directory, name)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
    return path


def read_dataset(manifest):
    """Load a manifest and all trajectory files it references (paths relative to it)."""
    lines = _lines(manifest)
    if not lines:
        raise ParseError("empty manifest", 1, manifest)
    _parse_header(lines[0], MANIFEST_TAG, 1, manifest)
    base = os.path.dirname(os.path.abspath(manifest))
    trajs, meta = [], {}
    kind = dim = None
    for i, text in enumerate(lines[1:], start=2):
        if not text.strip():
            raise ParseError("blank line", i, manifest)
        if text.startswith("meta."):
            key, sep, value = text[5:].partition("=")
            if not sep or not _KEY.fullmatch(key):
                raise ParseError(f"malformed metadata line {text!r}", i, manifest)
            meta[key] = value
            continue
        path = os.path.join(base, text)
        if not os.path.isfile(path):
            raise ParseError(f"referenced trajectory file {text!r} does not exist", i, manifest)
        arr, k, d = read_trajectory(path)
        if kind is None:
            kind, dim = k, d
        elif (k, d) != (kind, dim):
            raise ParseError(
                f"{text!r} has kind={k} dim={d}, expected kind={kind} dim={dim}", i, manifest
            )
        trajs.append(arr)
    if kind is None:
        raise ParseError("manifest lists no trajectory files", len(lines), manifest)
    n_aborted = int(meta["n_aborted"]) if meta.get("n_aborted", "").isdigit() else 0
    return TrajectoryDataset(trajs, kind=kind, dim=dim, metadata=meta, n_aborted=n_aborted)


# models ---------------------------------------------------------------------

def _featuremap_sections(fmap):
    if fmap is None:
        return []
    if isinstance(fmap, DiscreteIndicatorMap):
        return [("featuremap", [
            "type=indicator",
            f"alphabet_size={fmap.alphabet_size}",
            f"window_len={fmap.window_len}",
        ])]
    if isinstance(fmap, GaussianRandomMap):
        seed = "none" if fmap.seed is None else str(int(fmap.seed))
        return [
            ("featuremap", [
                "type=gaussian",
                f"window_len={fmap.window_len}",
                f"obs_dim={fmap.obs_dim}",
                f"dimension={fmap.dimension}",
                f"seed={seed}",
                f"bandwidth_rule={fmap.bandwidth_rule}",
            ]),
            ("featuremap.centers", [_row(c) for c in fmap.centers]),
            ("featuremap.inverse_bandwidths", [_row(fmap.inverse_bandwidths)]),
        ]
    raise ValueError(f"cannot serialize feature map of type {type(fmap).__name__}")


def dumps_model(model):
    """Text form of an :class:`Oom`, :class:`BinlessOom` or :class:`CoarseGrainedOom`."""
    sections = []
    bins = None
    if isinstance(model, CoarseGrainedOom):
        bins = model.bins
        kind, model = "coarse", model.oom
    elif isinstance(model, Oom):
        kind = "oom"
    elif isinstance(model, BinlessOom):
        kind = "binless"
    else:
        raise ValueError(f"cannot serialize {type(model).__name__}")
    if kind == "binless":
        header = [f"kind={kind}", f"m={model.m}", f"d={model.obs_dim}", f"N={model.n_points}",
                  "flavor=equilibrium"]
    else:
        header = [f"kind={kind}", f"m={model.m}", f"K={model.alphabet_size}", f"flavor={model.flavor}"]
    sections.append(("header", header))
    sections.append(("omega", [_row(model.omega)]))
    sections.append(("sigma", [_row(model.sigma)]))
    if kind == "binless":
        sections.append(("factors", [
            f"{_row(z)} | {_row(a)} | {_row(b)}"
            for z, a, b in zip(model.points, model.left, model.right)
        ]))
    else:
        for k, mat in enumerate(model.xi):
            sections.append((f"xi.{k}", [_row(r) for r in mat]))
    if bins is not None:
        sections.append(("bins", [f"edges.{i}={_row(e)}" for i, e in enumerate(bins.edges)]))
    sections.extend(_featuremap_sections(model.feature_map))
    out = [f"{MODEL_TAG} {VERSION}"]
    for name, body in sections:
        out.append(f"[{name}]")
        out.extend(body)
    return "\n".join(out) + "\n"


def _split_sections(lines, path):
    if not lines:
        raise ParseError("empty model file", 1, path)
    _parse_header(lines[0], MODEL_TAG, 1, path)
    sections, order = {}, []
    current = None
    for i, text in enumerate(lines[1:], start=2):
        if text.startswith("[") and text.endswith("]"):
            current = text[1:-1]
            if current in sections:
                raise ParseError(f"duplicate section [{current}]", i, path)
            sections[current] = (i, [])
            order.append(current)
        elif current is None:
            raise ParseError("content before the first section", i, path)
        elif not text.strip():
            raise ParseError("blank line", i, path)
        else:
            sections[current][1].append((i, text))
    return sections


def _kv(section, name, path):
    start, body = section
    out = {}
    for i, text in body:
        key, sep, value = text.partition("=")
        if not sep or not _KEY.fullmatch(key):
            raise ParseError(f"expected key=value in [{name}], got {text!r}", i, path)
        if key in out:
            raise ParseError(f"duplicate key {key!r}", i, path)
        out[key] = (i, value)
    return out


def _int_field(fields, key, section_line, path, minimum=1):
    if key not in fields:
        raise ParseError(f"missing field {key!r}", section_line, path)
    line, value = fields[key]
    if not _UINT.fullmatch(value) or int(value) < minimum:
        raise ParseError(f"invalid integer {key}={value!r}", line, path)
    return int(value)


def _need(sections, name, path):
    if name not in sections:
        raise ParseError(f"missing section [{name}]", None, path)
    return sections[name]


def _vector(sections, name, n, path):
    start, body = _need(sections, name, path)
    if len(body) != 1:
        raise ParseError(f"section [{name}] must hold exactly one line", start, path)
    i, text = body[0]
    return np.array(_parse_row(text, n, i, path))


def _matrix(sections, name, rows, cols, path):
    start, body = _need(sections, name, path)
    if rows is not None and len(body) != rows:
        raise ParseError(f"section [{name}] must hold {rows} rows, got {len(body)}", start, path)
    return np.array([_parse_row(text, cols, i, path) for i, text in body]).reshape(len(body), cols)


def _read_featuremap(sections, path):
    if "featuremap" not in sections:
        return None
    start = sections["featuremap"][0]
    fields = _kv(sections["featuremap"], "featuremap", path)
    kind = fields.get("type", (start, None))[1]
    if kind == "indicator":
        return DiscreteIndicatorMap(
            _int_field(fields, "alphabet_size", start, path),
            _int_field(fields, "window_len", start, path),
        )
    if kind == "gaussian":
        L = _int_field(fields, "window_len", start, path)
        d = _int_field(fields, "obs_dim", start, path)
        dim = _int_field(fields, "dimension", start, path)
        seed_line, seed_text = fields.get("seed", (start, "none"))
        if seed_text == "none":
            seed = None
        elif re.fullmatch(r"-?\d+", seed_text):
            seed = int(seed_text)
        else:
            raise ParseError(f"invalid seed {seed_text!r}", seed_line, path)
        rule = fields.get("bandwidth_rule", (start, "median"))[1]
        centers = _matrix(sections, "featuremap.centers", dim, L * d, path)
        inv_bw = _vector(sections, "featuremap.inverse_bandwidths", dim, path)
        return GaussianRandomMap(centers, inv_bw, L, d, seed=seed, bandwidth_rule=rule)
    raise ParseError(f"unknown feature map type {kind!r}", start, path)


def loads_model(text, path=None):
    """Parse the output of :func:`dumps_model`."""
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    sections = _split_sections(lines, path)
    head_line = _need(sections, "header", path)[0]
    header = _kv(sections["header"], "header", path)
    kind = header.get("kind", (head_line, None))[1]
    m = _int_field(header, "m", head_line, path)
    omega = _vector(sections, "omega", m, path)
    sigma = _vector(sections, "sigma", m, path)
    fmap = _read_featuremap(sections, path)
    try:
        if kind == "binless":
            d = _int_field(header, "d", head_line, path)
            n = _int_field(header, "N", head_line, path)
            start, body = _need(sections, "factors", path)
            if len(body) != n:
                raise ParseError(f"[factors] must hold N={n} lines, got {len(body)}", start, path)
            pts, left, right = [], [], []
            for i, row in body:
                parts = row.split(" | ")
                if len(parts) != 3:
                    raise ParseError("factor lines need the form 'z | left | right'", i, path)
                pts.append(_parse_row(parts[0], d, i, path))
                left.append(_parse_row(parts[1], m, i, path))
                right.append(_parse_row(parts[2], m, i, path))
            return BinlessOom(omega, np.array(pts), np.array(left), np.array(right), sigma, fmap)
        if kind not in ("oom", "coarse"):
            raise ParseError(f"unknown model kind {kind!r}", head_line, path)
        k = _int_field(header, "K", head_line, path)
        flavor = header.get("flavor", (head_line, "plain"))[1]
        xi = np.stack([_matrix(sections, f"xi.{s}", m, m, path) for s in range(k)])
        extra = [s for s in sections if s.startswith("xi.") and s not in {f"xi.{j}" for j in range(k)}]
        if extra:
            raise ParseError(f"unexpected section [{extra[0]}] for K={k}", sections[extra[0]][0], path)
        oom = Oom(omega, xi, sigma, flavor=flavor, feature_map=fmap)
        if kind == "oom":
            return oom
        bins_fields = _kv(_need(sections, "bins", path), "bins", path)
        edges = []
        for axis in range(len(bins_fields)):
            key = f"edges.{axis}"
            if key not in bins_fields:
                raise ParseError(f"missing {key}", sections["bins"][0], path)
            line, value = bins_fields[key]
            edges.append(_parse_row(value, None, line, path))
        return CoarseGrainedOom(oom, BinSpec(tuple(edges)))
    except ParseError:
        raise
    except ValueError as err:
        raise ParseError(f"inconsistent model: {err}", head_line, path) from None


def write_model(path, model):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(dumps_model(model))


def read_model(path):
    return loads_model("\n".join(_lines(path)) + "\n", path=path)
