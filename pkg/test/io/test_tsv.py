import numpy as np
import pytest
import pytest_check as check

from eqtlkit.tsv import DataFormatError, align_tables, load_dataset, read_matrix, read_splits, write_matrix


def write(path, text):
    path.write_text(text)
    return path


def test_write_then_read(tmp_path):
    values = np.array([[0.1, np.nan], [1 / 3, -2e-300]])
    path = tmp_path / "m.tsv"
    write_matrix(path, values, ["a", "b"], ["g1", "g2"])
    check.equal(path.read_text().splitlines()[0], "subject_id\tg1\tg2")
    check.is_in("NA", path.read_text())
    ids, cols, back = read_matrix(path)
    check.equal(ids, ["a", "b"])
    check.equal(cols, ["g1", "g2"])
    check.is_true(np.array_equal(back, values, equal_nan=True))


def test_numeric_ids_stay_strings(tmp_path):
    ids, _, _ = read_matrix(write(tmp_path / "m.tsv", "id\tx\n007\t1\n8\t2\n"))
    assert ids == ["007", "8"]


def test_padded_ids_do_not_collide(tmp_path):
    ids, _, values = read_matrix(write(tmp_path / "m.tsv", "id\tx\n007\t1\n7\t2\n"))
    check.equal(ids, ["007", "7"])
    check.is_true(np.array_equal(values, [[1.0], [2.0]]))


@pytest.mark.parametrize(
    "text, message",
    [
        ("id\tx\ns1\t1\ns1\t2\n", "duplicate"),
        ("id\tx\ns1\tabc\n", "non-numeric value 'abc'"),
        ("id\ns1\n", "no data columns"),
    ],
)
def test_read_errors(tmp_path, text, message):
    with pytest.raises(DataFormatError, match=message):
        read_matrix(write(tmp_path / "m.tsv", text))


def test_read_splits(tmp_path):
    path = write(tmp_path / "splits.tsv", "subject_id\tsplit\ns1\ttrain\ns2\ttest\n")
    check.equal(read_splits(path), {"s1": "train", "s2": "test"})
    with pytest.raises(DataFormatError):
        read_splits(write(tmp_path / "bad.tsv", "subject_id\tsplit\ns1\tholdout\n"))
    with pytest.raises(DataFormatError):
        read_splits(write(tmp_path / "cols.tsv", "id\tfold\ns1\ttrain\n"))


def test_align_tables_keeps_common_subjects(tmp_path, caplog):
    geno = write(tmp_path / "g.tsv", "id\trs1\trs2\ns1\t0\t1\ns2\t1\t2\ns3\t2\t0\n")
    expr = write(tmp_path / "e.tsv", "id\tGENE\ns3\t0.5\ns1\tNA\ns9\t1\n")
    ids, snps, X, genes, Y = align_tables(geno, expr)
    check.equal(ids, ["s1", "s3"])
    check.equal(snps, ["rs1", "rs2"])
    check.is_true(np.array_equal(X, [[0, 1], [2, 0]]))
    check.is_true(np.isnan(Y[0, 0]))
    check.equal(Y[1, 0], 0.5)
    check.is_in("Dropping 1 subjects", caplog.text)


def test_align_tables_rejects_missing_genotypes(tmp_path):
    geno = write(tmp_path / "g.tsv", "id\trs1\ns1\tNA\n")
    expr = write(tmp_path / "e.tsv", "id\tGENE\ns1\t1\n")
    with pytest.raises(DataFormatError, match="missing genotype"):
        align_tables(geno, expr)


def test_load_dataset(tmp_path):
    geno = write(tmp_path / "g.tsv", "id\trs1\trs2\ns1\t0\t1\ns2\t1\t2\ns3\t2\t0\n")
    expr = write(tmp_path / "e.tsv", "id\tA\tB\ns1\t1\tNA\ns2\t2\t5\ns3\t3\t7\n")
    data = load_dataset(geno, expr)
    check.equal(data.response_names, ["A", "B"])
    check.equal(data.mask.tolist(), [[True, False], [True, True], [True, True]])
    check.is_true(np.allclose(data.y_center, [2.0, 6.0]))
    raw = load_dataset(geno, expr, standardize=False, subjects=["s2", "s3"])
    check.equal(raw.subject_ids, ["s2", "s3"])
    check.is_none(raw.x_center)


def test_load_dataset_rejects_empty_subject(tmp_path):
    geno = write(tmp_path / "g.tsv", "id\trs1\ns1\t0\ns2\t1\n")
    expr = write(tmp_path / "e.tsv", "id\tA\ns1\tNA\ns2\t2\n")
    with pytest.raises(DataFormatError, match="without any observed expression"):
        load_dataset(geno, expr)
