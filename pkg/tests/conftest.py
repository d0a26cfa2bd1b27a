import numpy as np
import pytest

from pmcmp.matching import ResidueMatch, match_residues
from pmcmp.model_io import CaAtom, ResidueKey, StructureModel


def ca_trace(n: int, rng: np.random.Generator) -> np.ndarray:
    """Random CA-like trace: ~3.8 A steps with mild directional drift."""
    steps = rng.normal(size=(n, 3))
    steps /= np.linalg.norm(steps, axis=1, keepdims=True)
    for i in range(1, n):
        steps[i] = 0.6 * steps[i - 1] + 0.4 * steps[i]
        steps[i] /= np.linalg.norm(steps[i])
    return np.cumsum(3.8 * steps, axis=0)


def pdb_atom_line(
    serial: int,
    resseq: int,
    x: float,
    y: float,
    z: float,
    chain: str = "A",
    icode: str = " ",
    resname: str = "ALA",
    atom_name: str = " CA ",
    altloc: str = " ",
    record: str = "ATOM  ",
) -> str:
    return (
        f"{record:<6.6s}{serial:>5d} {atom_name:<4.4s}{altloc:1.1s}{resname:>3.3s} "
        f"{chain:1.1s}{resseq:>4d}{icode:1.1s}   {x:>8.3f}{y:>8.3f}{z:>8.3f}"
        f"  1.00  0.00           C"
    )


def pdb_bytes(coords, chain: str = "A", start: int = 1, resnames=None) -> bytes:
    lines = []
    for i, (x, y, z) in enumerate(coords):
        resname = resnames[i] if resnames else "ALA"
        lines.append(pdb_atom_line(i + 1, start + i, x, y, z, chain=chain, resname=resname))
    lines.append("END")
    return ("\n".join(lines) + "\n").encode("ascii")


def build_model(
    name: str,
    coords,
    start: int = 1,
    chain: str = "A",
    resnames=None,
    seq_nums=None,
) -> StructureModel:
    atoms = []
    for i, (x, y, z) in enumerate(coords):
        seq = seq_nums[i] if seq_nums is not None else start + i
        resname = resnames[i] if resnames else "ALA"
        atoms.append(
            CaAtom(ResidueKey(chain, int(seq), " "), resname, float(x), float(y), float(z))
        )
    return StructureModel(name=name, atoms=tuple(atoms))


def match_of(coords_a, coords_b, start: int = 1) -> ResidueMatch:
    a = build_model("a", coords_a, start=start)
    b = build_model("b", coords_b, start=start)
    return match_residues(a, b)


def noisy_pair(n: int, sigma: float, rng: np.random.Generator) -> ResidueMatch:
    a = ca_trace(n, rng)
    b = a + rng.normal(scale=sigma, size=a.shape)
    return match_of(a, b)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)
