"""Legacy ASCII VTK unstructured grids (triangles and interface lines)."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

VTK_LINE = 3
VTK_TRIANGLE = 5


def _fmt(a):
    return " ".join(repr(float(v)) for v in np.ravel(a))


def _write_grid(path, points, cells, cell_type, data, title):
    points = np.asarray(points, dtype=float)
    cells = np.asarray(cells, dtype=np.int64)
    npc = cells.shape[1] if cells.ndim == 2 else 0
    lines = ["# vtk DataFile Version 3.0", title, "ASCII", "DATASET UNSTRUCTURED_GRID",
             f"POINTS {len(points)} double"]
    lines += [f"{_fmt(p)} 0.0" for p in points]
    lines.append(f"CELLS {len(cells)} {len(cells) * (npc + 1)}")
    lines += [f"{npc} " + " ".join(str(int(i)) for i in c) for c in cells]
    lines.append(f"CELL_TYPES {len(cells)}")
    lines += [str(cell_type)] * len(cells)
    if data:
        lines.append(f"CELL_DATA {len(cells)}")
        for name, values in data.items():
            values = np.asarray(values, dtype=float)
            lines += [f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
            lines += [repr(float(v)) for v in values]
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def write_vtk(mesh, state, path, title="fracflow bulk"):
    """Bulk triangles with cell data ``saturation`` and ``pressure``."""
    _write_grid(path, mesh.points, mesh.triangles, VTK_TRIANGLE,
                {"saturation": state.S, "pressure": state.P}, title)


def write_interface_vtk(mesh, state, aperture, path, title="fracflow interface"):
    """Interface segments with ``saturation_gamma``, ``pressure_gamma`` and ``aperture``."""
    _write_grid(path, mesh.points, mesh.interface, VTK_LINE,
                {"saturation_gamma": state.S_gamma, "pressure_gamma": state.P_gamma,
                 "aperture": aperture}, title)


@dataclass
class VtkGrid:
    points: np.ndarray
    cells: list
    cell_types: np.ndarray
    cell_data: dict


class VtkFormatError(ValueError):
    pass


def read_vtk(path):
    """Parse files written by this module (legacy ASCII unstructured grid)."""
    with open(path) as fh:
        tok = fh.read().split("\n")
    if not tok[0].startswith("# vtk DataFile"):
        raise VtkFormatError("missing VTK header")
    if tok[2].strip() != "ASCII" or tok[3].strip() != "DATASET UNSTRUCTURED_GRID":
        raise VtkFormatError("only ASCII unstructured grids are supported")
    i = 4
    pts = cells = types = None
    data = {}
    n_cells = 0
    while i < len(tok):
        line = tok[i].split()
        i += 1
        if not line:
            continue
        key = line[0]
        if key == "POINTS":
            n = int(line[1])
            pts = np.array([[float(v) for v in tok[i + k].split()] for k in range(n)])[:, :2]
            i += n
        elif key == "CELLS":
            n_cells = int(line[1])
            cells = [[int(v) for v in tok[i + k].split()[1:]] for k in range(n_cells)]
            i += n_cells
        elif key == "CELL_TYPES":
            n = int(line[1])
            types = np.array([int(tok[i + k]) for k in range(n)])
            i += n
        elif key == "CELL_DATA":
            n_cells = int(line[1])
        elif key == "SCALARS":
            name = line[1]
            i += 1  # lookup table line
            data[name] = np.array([float(tok[i + k]) for k in range(n_cells)])
            i += n_cells
        else:
            raise VtkFormatError(f"unexpected section {key!r}")
    if pts is None or cells is None or types is None:
        raise VtkFormatError("incomplete grid")
    return VtkGrid(pts, cells, types, data)
