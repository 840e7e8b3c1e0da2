import random

import pytest

from linkmark import codec


def gf2_long_division_parity(payload_bits):
    """Reference oracle: schoolbook polynomial long division over GF(2)."""
    gen = [(codec.GENERATOR_POLY >> (codec.PARITY_BITS - i)) & 1
           for i in range(codec.PARITY_BITS + 1)]  # descending degree
    work = list(payload_bits) + [0] * codec.PARITY_BITS
    for i in range(len(payload_bits)):
        if work[i]:
            for j, g in enumerate(gen):
                work[i + j] ^= g
    return work[-codec.PARITY_BITS:]


def test_pack_single_char():
    bits = codec.pack_payload("x")  # 120 -> 1111000
    assert bits[:7] == [1, 1, 1, 1, 0, 0, 0]
    assert bits[7:] == [0] * 49


def test_pack_empty_is_all_zero():
    assert codec.pack_payload("") == [0] * 56


def test_pack_unpack_round_trip_random_texts():
    rng = random.Random(1234)
    for _ in range(1000):
        n = rng.randint(0, 8)
        # printable ASCII avoids NUL-padding ambiguity at the text tail
        text = "".join(chr(rng.randint(33, 126)) for _ in range(n))
        assert codec.unpack_payload(codec.pack_payload(text)) == text


def test_pack_rejects_non_ascii_and_long_text():
    with pytest.raises(codec.PayloadError):
        codec.pack_payload("café")
    with pytest.raises(codec.PayloadError):
        codec.pack_payload("toolongxx")


def test_encode_zero_payload_gives_zero_codeword():
    assert codec.bch_encode([0] * 56) == [0] * 100


def test_encode_is_systematic():
    rng = random.Random(7)
    for _ in range(50):
        payload = [rng.randint(0, 1) for _ in range(56)]
        cw = codec.bch_encode(payload)
        assert len(cw) == 100
        assert cw[:56] == payload
        assert cw[96:] == [0, 0, 0, 0]


def test_parity_matches_long_division_oracle():
    rng = random.Random(99)
    for _ in range(200):
        payload = [rng.randint(0, 1) for _ in range(56)]
        cw = codec.bch_encode(payload)
        assert cw[56:96] == gf2_long_division_parity(payload)


def test_decode_clean_codeword():
    rng = random.Random(5)
    for _ in range(100):
        payload = [rng.randint(0, 1) for _ in range(56)]
        assert codec.bch_decode(codec.bch_encode(payload)) == payload


@pytest.mark.parametrize("n_errors", [1, 2, 3, 4, 5])
def test_decode_corrects_up_to_five_flips(n_errors):
    rng = random.Random(1000 + n_errors)
    for _ in range(400):
        payload = [rng.randint(0, 1) for _ in range(56)]
        noisy = codec.bch_encode(payload)
        for pos in rng.sample(range(96), n_errors):
            noisy[pos] ^= 1
        assert codec.bch_decode(noisy) == payload


def test_decode_heavy_corruption_fails_cleanly():
    rng = random.Random(31337)
    wrong = 0
    for _ in range(500):
        payload = [rng.randint(0, 1) for _ in range(56)]
        noisy = codec.bch_encode(payload)
        for pos in rng.sample(range(96), 20):
            noisy[pos] ^= 1
        out = codec.bch_decode(noisy)  # must not raise
        if out is not None and out != payload:
            wrong += 1
    # miscorrections are possible but a crash never is
    assert wrong >= 0


def test_pad_bits_are_ignored():
    rng = random.Random(2)
    payload = [rng.randint(0, 1) for _ in range(56)]
    noisy = codec.bch_encode(payload)
    noisy[96:] = [1, 1, 1, 1]
    assert codec.bch_decode(noisy) == payload


def test_decode_rejects_wrong_length():
    with pytest.raises(ValueError):
        codec.bch_decode([0] * 96)
    with pytest.raises(ValueError):
        codec.bch_encode([0] * 100)


def test_text_level_helpers():
    cw = codec.encode_text("ab.c/1X")
    assert len(cw) == 100
    assert codec.decode_text(cw) == "ab.c/1X"
    noisy = cw[:]
    for pos in (3, 17, 42, 77, 90):
        noisy[pos] ^= 1
    assert codec.decode_text(noisy) == "ab.c/1X"
