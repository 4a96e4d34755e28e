import pytest
from Crypto.Hash import keccak

from axe import fixtures


def _k(text: str) -> int:
    h = keccak.new(digest_bits=256)
    h.update(text.encode())
    return int.from_bytes(h.digest(), "big")


@pytest.mark.parametrize("sig", sorted(fixtures.SEL))
def test_selector(sig):
    assert fixtures.SEL[sig] == _k(sig) >> 224


@pytest.mark.parametrize("sig", sorted(fixtures.TOPIC))
def test_topic(sig):
    assert fixtures.TOPIC[sig] == _k(sig)
