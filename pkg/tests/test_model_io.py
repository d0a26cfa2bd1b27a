import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import ca_trace, pdb_atom_line, pdb_bytes
from pmcmp.errors import FormatError, MultiChainError
from pmcmp.model_io import ResidueKey, model_digest, parse_pdb


def test_minimal_three_residue_file():
    body = pdb_bytes([(1.0, 2.0, 3.0), (4.0, 5.0, 6.0), (7.0, 8.0, 9.0)])
    model = parse_pdb(body, "mini")
    assert model.declared_length == 3
    assert model.keys() == (
        ResidueKey("A", 1, " "),
        ResidueKey("A", 2, " "),
        ResidueKey("A", 3, " "),
    )
    assert model.atoms[0].x == 1.0
    assert model.atoms[2].z == 9.0


def test_residue_range_3_to_12():
    coords = [(float(i), 0.0, 0.0) for i in range(10)]
    model = parse_pdb(pdb_bytes(coords, start=3), "partial")
    assert model.declared_length == 10
    assert model.atoms[0].key.seq_num == 3
    assert model.atoms[-1].key.seq_num == 12


def test_49_residue_model():
    rng = np.random.default_rng(49)
    model = parse_pdb(pdb_bytes(ca_trace(49, rng)), "t1b72A_model")
    assert model.declared_length == 49


def test_ignores_non_ca_and_other_records():
    lines = [
        "HEADER    TEST",
        "REMARK  1 nothing to see",
        pdb_atom_line(1, 1, 1.0, 1.0, 1.0, atom_name=" N  "),
        pdb_atom_line(2, 1, 2.0, 2.0, 2.0),
        pdb_atom_line(3, 1, 9.0, 9.0, 9.0, atom_name=" CB "),
        pdb_atom_line(4, 1, 8.0, 8.0, 8.0, atom_name=" HA "),
        pdb_atom_line(5, 2, 3.0, 3.0, 3.0, record="HETATM"),
        pdb_atom_line(6, 2, 4.0, 4.0, 4.0),
        "TER",
        "END",
    ]
    model = parse_pdb("\n".join(lines).encode(), "mixed")
    assert model.declared_length == 2
    assert [a.x for a in model.atoms] == [2.0, 4.0]


def test_calcium_hetatm_name_is_not_ca_trace():
    # calcium's atom name is "CA  ", left-justified differently from " CA "
    lines = [
        pdb_atom_line(1, 1, 1.0, 1.0, 1.0),
        pdb_atom_line(2, 2, 2.0, 2.0, 2.0, atom_name="CA  ", resname=" CA"),
        "END",
    ]
    model = parse_pdb("\n".join(lines).encode(), "ion")
    assert model.declared_length == 1


def test_stops_at_first_endmdl():
    lines = [
        "MODEL        1",
        pdb_atom_line(1, 1, 1.0, 1.0, 1.0),
        pdb_atom_line(2, 2, 2.0, 2.0, 2.0),
        "ENDMDL",
        "MODEL        2",
        pdb_atom_line(3, 1, 9.0, 9.0, 9.0),
        pdb_atom_line(4, 2, 8.0, 8.0, 8.0),
        pdb_atom_line(5, 3, 7.0, 7.0, 7.0),
        "ENDMDL",
        "END",
    ]
    model = parse_pdb("\n".join(lines).encode(), "multimodel")
    assert model.declared_length == 2
    assert model.atoms[0].x == 1.0


def test_altloc_policy():
    lines = [
        pdb_atom_line(1, 1, 1.0, 1.0, 1.0, altloc="A"),
        pdb_atom_line(2, 1, 9.0, 9.0, 9.0, altloc="B"),
        pdb_atom_line(3, 2, 2.0, 2.0, 2.0),
        "END",
    ]
    model = parse_pdb("\n".join(lines).encode(), "altloc")
    assert model.declared_length == 2
    assert model.atoms[0].x == 1.0


def test_duplicate_residue_after_altloc_filtering():
    lines = [
        pdb_atom_line(1, 1, 1.0, 1.0, 1.0, altloc=" "),
        pdb_atom_line(2, 1, 2.0, 2.0, 2.0, altloc="A"),
        "END",
    ]
    with pytest.raises(FormatError):
        parse_pdb("\n".join(lines).encode(), "dup")


def test_multi_chain_rejected():
    lines = [
        pdb_atom_line(1, 1, 1.0, 1.0, 1.0, chain="A"),
        pdb_atom_line(2, 2, 2.0, 2.0, 2.0, chain="B"),
        "END",
    ]
    with pytest.raises(MultiChainError):
        parse_pdb("\n".join(lines).encode(), "chains")


def test_unparsable_coordinates():
    good = pdb_atom_line(1, 1, 1.0, 1.0, 1.0)
    bad = good[:30] + "  xx.xxx" + good[38:]
    with pytest.raises(FormatError):
        parse_pdb(f"{bad}\nEND\n".encode(), "badcoord")


def test_non_finite_coordinate_rejected():
    good = pdb_atom_line(1, 1, 1.0, 1.0, 1.0)
    bad = good[:30] + "     nan" + good[38:]
    with pytest.raises(FormatError):
        parse_pdb(f"{bad}\nEND\n".encode(), "nan")


def test_no_ca_atoms():
    with pytest.raises(FormatError):
        parse_pdb(b"HEADER    EMPTY\nEND\n", "empty")
    with pytest.raises(FormatError):
        parse_pdb(pdb_atom_line(1, 1, 1.0, 1.0, 1.0, atom_name=" N  ").encode(), "noca")


def test_undecodable_bytes():
    with pytest.raises(FormatError):
        parse_pdb(b"\xff\xfe\x00ATOM", "binary")


def test_out_of_order_records_are_sorted():
    lines = [
        pdb_atom_line(1, 5, 5.0, 5.0, 5.0),
        pdb_atom_line(2, 1, 1.0, 1.0, 1.0),
        pdb_atom_line(3, 3, 3.0, 3.0, 3.0),
        "END",
    ]
    model = parse_pdb("\n".join(lines).encode(), "shuffled")
    assert [a.key.seq_num for a in model.atoms] == [1, 3, 5]
    assert [a.x for a in model.atoms] == [1.0, 3.0, 5.0]


def test_insertion_code_ordering():
    lines = [
        pdb_atom_line(1, 100, 2.0, 0.0, 0.0, icode="A"),
        pdb_atom_line(2, 100, 1.0, 0.0, 0.0),
        pdb_atom_line(3, 101, 3.0, 0.0, 0.0),
        "END",
    ]
    model = parse_pdb("\n".join(lines).encode(), "icodes")
    assert [(a.key.seq_num, a.key.insertion_code) for a in model.atoms] == [
        (100, " "),
        (100, "A"),
        (101, " "),
    ]


def test_negative_residue_numbers():
    lines = [
        pdb_atom_line(1, -3, 1.0, 1.0, 1.0),
        pdb_atom_line(2, 2, 2.0, 2.0, 2.0),
        "END",
    ]
    model = parse_pdb("\n".join(lines).encode(), "neg")
    assert model.atoms[0].key.seq_num == -3


def test_residue_key_ordering_and_equality():
    assert ResidueKey("A", 1) < ResidueKey("A", 2)
    assert ResidueKey("A", 100, " ") < ResidueKey("A", 100, "A")
    assert ResidueKey("A", 100, "A") < ResidueKey("A", 101, " ")
    assert ResidueKey("A", 5) == ResidueKey("A", 5, " ")
    assert ResidueKey("A", 5) != ResidueKey("B", 5)


def test_parse_round_trip_is_deterministic():
    rng = np.random.default_rng(7)
    body = pdb_bytes(ca_trace(20, rng))
    assert parse_pdb(body, "x") == parse_pdb(body, "x")


def test_digest_determinism_and_sensitivity():
    rng = np.random.default_rng(11)
    coords = ca_trace(10, rng)
    body = pdb_bytes(coords)
    m1 = parse_pdb(body, "m")
    m2 = parse_pdb(body, "m")
    assert model_digest(m1) == model_digest(m2)

    perturbed = coords.copy()
    perturbed[4, 1] += 0.001
    m3 = parse_pdb(pdb_bytes(perturbed), "m")
    assert model_digest(m1) != model_digest(m3)


@settings(max_examples=30, deadline=None)
@given(
    seq_nums=st.lists(
        st.integers(min_value=-99, max_value=999), min_size=1, max_size=30, unique=True
    ),
    seed=st.integers(min_value=0, max_value=2**31),
)
def test_generated_files_satisfy_model_invariants(seq_nums, seed):
    rng = np.random.default_rng(seed)
    coords = rng.uniform(-99.0, 99.0, size=(len(seq_nums), 3)).round(3)
    lines = [
        pdb_atom_line(i + 1, seq, x, y, z)
        for i, (seq, (x, y, z)) in enumerate(zip(seq_nums, coords))
    ]
    model = parse_pdb("\n".join(lines + ["END"]).encode(), "gen")
    assert model.declared_length == len(seq_nums) >= 1
    keys = model.keys()
    assert all(keys[i] < keys[i + 1] for i in range(len(keys) - 1))
    assert len(set(keys)) == len(keys)
    assert len({k.chain_id for k in keys}) == 1
    # round trip: same bytes parse to the identical model
    again = parse_pdb("\n".join(lines + ["END"]).encode(), "gen")
    assert again == model
