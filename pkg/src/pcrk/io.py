"""ASCII readers and writers: XYZ, PLY, OBJ, PGM/PPM, camera and matrix files."""
from __future__ import annotations

from pathlib import Path

import numpy as np

from .errors import PcrkError
from .geom import Camera, TriangleMesh, as_cloud

FLOAT_FMT = "%.17g"


def _write_rows(fh, rows, fmt=FLOAT_FMT):
    if len(rows):
        np.savetxt(fh, rows, fmt=fmt, delimiter=" ")


def read_xyz(path) -> np.ndarray:
    rows = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) < 3:
                raise PcrkError(f"{path}:{lineno}: expected 'x y z'")
            try:
                rows.append([float(p) for p in parts[:3]])
            except ValueError:
                raise PcrkError(f"{path}:{lineno}: not a number") from None
    return as_cloud(np.array(rows).reshape(-1, 3), allow_empty=True)


def write_xyz(path, points) -> None:
    pts = as_cloud(points, allow_empty=True)
    with open(path, "w") as fh:
        _write_rows(fh, pts)


def write_points2d(path, points) -> None:
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    with open(path, "w") as fh:
        _write_rows(fh, pts)


def read_ply(path) -> tuple[np.ndarray, np.ndarray | None]:
    """Read an ASCII PLY; returns ``(vertices, faces or None)``."""
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0].strip() != "ply":
        raise PcrkError(f"{path}: not a PLY file")
    n_vert = n_face = 0
    vert_props: list[str] = []
    current = None
    body = None
    for i, line in enumerate(lines[1:], 1):
        tok = line.split()
        if not tok:
            continue
        if tok[0] == "format" and tok[1] != "ascii":
            raise PcrkError(f"{path}: only ASCII PLY is supported")
        elif tok[0] == "element":
            current = tok[1]
            if current == "vertex":
                n_vert = int(tok[2])
            elif current == "face":
                n_face = int(tok[2])
        elif tok[0] == "property" and current == "vertex":
            vert_props.append(tok[-1])
        elif tok[0] == "end_header":
            body = i + 1
            break
    if body is None:
        raise PcrkError(f"{path}: missing end_header")
    try:
        cols = [vert_props.index(c) for c in "xyz"]
    except ValueError:
        raise PcrkError(f"{path}: vertex element lacks x/y/z") from None
    data = [ln.split() for ln in lines[body:] if ln.strip()]
    if len(data) < n_vert + n_face:
        raise PcrkError(f"{path}: truncated body")
    verts = np.array([[float(r[c]) for c in cols] for r in data[:n_vert]]).reshape(-1, 3)
    faces = None
    if n_face:
        faces = []
        for r in data[n_vert:n_vert + n_face]:
            k = int(r[0])
            idx = [int(x) for x in r[1:1 + k]]
            # fan-triangulate polygons
            faces.extend([idx[0], idx[j], idx[j + 1]] for j in range(1, k - 1))
        faces = np.array(faces, dtype=np.int64).reshape(-1, 3)
    return as_cloud(verts, allow_empty=True), faces


def write_ply(path, points, faces=None) -> None:
    pts = as_cloud(points, allow_empty=True)
    with open(path, "w") as fh:
        fh.write("ply\nformat ascii 1.0\n")
        fh.write(f"element vertex {len(pts)}\n")
        fh.write("property double x\nproperty double y\nproperty double z\n")
        if faces is not None:
            fh.write(f"element face {len(faces)}\nproperty list uchar int vertex_indices\n")
        fh.write("end_header\n")
        _write_rows(fh, pts)
        if faces is not None and len(faces):
            f = np.asarray(faces, dtype=np.int64)
            np.savetxt(fh, np.column_stack([np.full(len(f), 3), f]), fmt="%d", delimiter=" ")


def read_obj(path) -> TriangleMesh:
    verts, faces = [], []
    with open(path) as fh:
        for line in fh:
            tok = line.split()
            if not tok:
                continue
            if tok[0] == "v":
                verts.append([float(x) for x in tok[1:4]])
            elif tok[0] == "f":
                idx = [int(x.split("/")[0]) for x in tok[1:]]
                idx = [i - 1 if i > 0 else len(verts) + i for i in idx]
                faces.extend([idx[0], idx[j], idx[j + 1]] for j in range(1, len(idx) - 1))
    return TriangleMesh(np.array(verts).reshape(-1, 3), np.array(faces, dtype=np.int64).reshape(-1, 3))


def write_obj(path, mesh: TriangleMesh) -> None:
    with open(path, "w") as fh:
        if mesh.n_vertices:
            np.savetxt(fh, mesh.vertices, fmt="v " + " ".join([FLOAT_FMT] * 3))
        if mesh.n_faces:
            np.savetxt(fh, mesh.faces + 1, fmt="f %d %d %d")


def read_mesh(path) -> TriangleMesh:
    if str(path).lower().endswith(".ply"):
        v, f = read_ply(path)
        return TriangleMesh(v, f if f is not None else np.zeros((0, 3), dtype=np.int64))
    return read_obj(path)


def write_mesh(path, mesh: TriangleMesh) -> None:
    if str(path).lower().endswith(".ply"):
        write_ply(path, mesh.vertices, mesh.faces)
    else:
        write_obj(path, mesh)


def read_cloud(path) -> np.ndarray:
    if str(path).lower().endswith(".ply"):
        return read_ply(path)[0]
    return read_xyz(path)


def write_cloud(path, points) -> None:
    if str(path).lower().endswith(".ply"):
        write_ply(path, points)
    else:
        write_xyz(path, points)


# --- Netpbm -----------------------------------------------------------------

def _pnm_tokens(data: bytes, count: int, start: int = 0) -> tuple[list[bytes], int]:
    """Read ``count`` whitespace-separated header tokens, skipping comments."""
    tokens: list[bytes] = []
    i = start
    while len(tokens) < count:
        while i < len(data) and data[i:i + 1].isspace():
            i += 1
        if i >= len(data):
            raise PcrkError("truncated netpbm header")
        if data[i:i + 1] == b"#":
            while i < len(data) and data[i:i + 1] not in (b"\n", b"\r"):
                i += 1
            continue
        j = i
        while j < len(data) and not data[j:j + 1].isspace():
            j += 1
        tokens.append(data[i:j])
        i = j
    return tokens, i


def _read_pnm(path, binary_magic: bytes, ascii_magic: bytes, channels: int) -> np.ndarray:
    data = Path(path).read_bytes()
    (magic, w, h, maxval), pos = _pnm_tokens(data, 4)
    w, h, maxval = int(w), int(h), int(maxval)
    if maxval > 255:
        raise PcrkError(f"{path}: 16-bit netpbm not supported")
    n = w * h * channels
    if magic == binary_magic:
        raw = np.frombuffer(data[pos + 1:pos + 1 + n], dtype=np.uint8)
    elif magic == ascii_magic:
        raw = np.array(data[pos:].split()[:n], dtype=np.int64)
    else:
        raise PcrkError(f"{path}: unexpected magic {magic!r}")
    if raw.size != n:
        raise PcrkError(f"{path}: truncated pixel data")
    raw = raw.astype(np.float64) * (255.0 / maxval) if maxval != 255 else raw
    shape = (h, w, channels) if channels > 1 else (h, w)
    return np.asarray(raw).reshape(shape).astype(np.uint8)


def read_pgm(path) -> np.ndarray:
    return _read_pnm(path, b"P5", b"P2", 1)


def read_mask(path) -> np.ndarray:
    """PGM mask; values above 127 are foreground."""
    return read_pgm(path) > 127


def write_mask(path, mask, binary: bool = True) -> None:
    m = np.asarray(mask, dtype=bool)
    h, w = m.shape
    vals = np.where(m, 255, 0).astype(np.uint8)
    with open(path, "wb") as fh:
        if binary:
            fh.write(f"P5\n{w} {h}\n255\n".encode())
            fh.write(vals.tobytes())
        else:
            fh.write(f"P2\n{w} {h}\n255\n".encode())
            for row in vals:
                fh.write((" ".join(str(int(x)) for x in row) + "\n").encode())


def read_ppm(path) -> np.ndarray:
    return _read_pnm(path, b"P6", b"P3", 3)


def write_ppm(path, image) -> None:
    img = np.asarray(image, dtype=np.uint8)
    h, w, _ = img.shape
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode())
        fh.write(np.ascontiguousarray(img).tobytes())


# --- small text formats -------------------------------------------------------

def read_matrix(path, shape=(3, 3)) -> np.ndarray:
    try:
        vals = np.array(Path(path).read_text().split(), dtype=np.float64)
    except ValueError:
        raise PcrkError(f"{path}: not a numeric matrix") from None
    if vals.size != int(np.prod(shape)):
        raise PcrkError(f"{path}: expected {np.prod(shape)} numbers, got {vals.size}")
    return vals.reshape(shape)


def read_camera(path) -> Camera:
    """Camera file: ``key = value`` lines for fx, fy, cx, cy and optional R (9 numbers), t (3)."""
    vals: dict[str, list[float]] = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise PcrkError(f"{path}:{lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        try:
            vals[key] = [float(x) for x in value.replace(",", " ").split()]
        except ValueError:
            raise PcrkError(f"{path}:{lineno}: not a number") from None
    unknown = set(vals) - {"fx", "fy", "cx", "cy", "R", "t"}
    if unknown:
        raise PcrkError(f"{path}: unknown camera keys {sorted(unknown)}")
    try:
        return Camera(
            fx=vals["fx"][0], fy=vals["fy"][0], cx=vals["cx"][0], cy=vals["cy"][0],
            R=np.array(vals.get("R", np.eye(3).ravel())).reshape(3, 3),
            t=np.array(vals.get("t", [0.0, 0.0, 0.0])).reshape(3),
        )
    except (KeyError, IndexError, ValueError) as exc:
        raise PcrkError(f"{path}: incomplete camera ({exc})") from None


def write_camera(path, cam: Camera) -> None:
    with open(path, "w") as fh:
        for key in ("fx", "fy", "cx", "cy"):
            fh.write(f"{key} = {getattr(cam, key)!r}\n")
        fh.write("R = " + " ".join(repr(float(x)) for x in cam.R.ravel()) + "\n")
        fh.write("t = " + " ".join(repr(float(x)) for x in cam.t) + "\n")
