import pytest

from specrich.config import as_bool, as_floats, as_ints, format_kv, parse_kv
from specrich.errors import DataError


def test_parse_with_comments():
    text = "# header\n a = 1 \n\nb = x y  # trailing\n"
    assert parse_kv(text) == {"a": "1", "b": "x y"}


@pytest.mark.parametrize("text", ["a = 1\na = 2\n", "novalue\n", " = 3\n"])
def test_parse_errors(text):
    with pytest.raises(DataError):
        parse_kv(text)


def test_format_round_trip():
    d = {"n": "3", "grid": "1.0, 2.5"}
    assert parse_kv(format_kv(d, "two\nlines")) == d


def test_converters():
    assert as_floats("1, 2.5 3e2", "x") == [1.0, 2.5, 300.0]
    assert as_ints("1-3, 7", "k") == [1, 2, 3, 7]
    assert as_bool("Yes", "b") is True and as_bool("off", "b") is False
    for fn, bad in ((as_floats, "a"), (as_ints, "1.5"), (as_bool, "maybe")):
        with pytest.raises(DataError):
            fn(bad, "key")
