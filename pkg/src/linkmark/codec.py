"""Payload packing and BCH error correction for the 100-bit codeword.

Codeword layout: 56 payload bits | 40 parity bits | 4 zero pad bits.
The payload carries up to 8 characters of 7-bit ASCII (a shortened-URL
token, 7 bits per character, MSB first). Parity comes from a binary BCH
code over GF(2^8) (primitive polynomial 0x11D, t=5), shortened from the
full length-255 code to 96 code bits. Any pattern of up to 5 bit errors
in the 96 code bits is corrected; heavier corruption yields an explicit
decode failure, never an exception.

Bit index 0 of a codeword is the first payload bit. This ordering is part
of the checkpoint compatibility contract and must not change.
"""

from __future__ import annotations

from typing import Optional, Sequence

import numpy as np

PAYLOAD_CHARS = 8
BITS_PER_CHAR = 7
PAYLOAD_BITS = PAYLOAD_CHARS * BITS_PER_CHAR  # 56
PARITY_BITS = 40
PAD_BITS = 4
CODE_BITS = PAYLOAD_BITS + PARITY_BITS  # 96, the error-corrected region
CODEWORD_BITS = CODE_BITS + PAD_BITS  # 100

GF_M = 8
GF_SIZE = 256
GF_ORDER = 255  # multiplicative group order
PRIM_POLY = 0x11D  # x^8 + x^4 + x^3 + x^2 + 1
T_ERRORS = 5


class PayloadError(ValueError):
    """Text cannot be packed into the 56-bit payload."""


def _build_gf_tables() -> tuple[list[int], list[int]]:
    exp = [0] * (2 * GF_ORDER)
    log = [0] * GF_SIZE
    x = 1
    for i in range(GF_ORDER):
        exp[i] = x
        log[x] = i
        x <<= 1
        if x & 0x100:
            x ^= PRIM_POLY
    for i in range(GF_ORDER, 2 * GF_ORDER):
        exp[i] = exp[i - GF_ORDER]
    return exp, log


_EXP, _LOG = _build_gf_tables()
_EXP_NP = np.array(_EXP[:GF_ORDER], dtype=np.int64)


def _gf_mul(a: int, b: int) -> int:
    if a == 0 or b == 0:
        return 0
    return _EXP[_LOG[a] + _LOG[b]]


def _gf_inv(a: int) -> int:
    return _EXP[GF_ORDER - _LOG[a]]


def _generator_poly() -> int:
    """Binary generator polynomial with roots alpha^1 .. alpha^10.

    Product of the minimal polynomials of alpha, alpha^3, alpha^5,
    alpha^7, alpha^9; degree 8*5 = 40. Returned as an int whose bit i is
    the coefficient of x^i.
    """
    roots: set[int] = set()
    for base in (1, 3, 5, 7, 9):
        r = base
        while r not in roots:
            roots.add(r)
            r = (2 * r) % GF_ORDER
    g = [1]  # coefficients over GF(256), ascending degree
    for j in sorted(roots):
        alpha_j = _EXP[j]
        nxt = [0] * (len(g) + 1)
        for i, c in enumerate(g):
            nxt[i + 1] ^= c
            nxt[i] ^= _gf_mul(c, alpha_j)
        g = nxt
    if any(c not in (0, 1) for c in g):
        raise AssertionError("generator polynomial is not binary")
    out = 0
    for i, c in enumerate(g):
        out |= c << i
    return out


GENERATOR_POLY = _generator_poly()
assert GENERATOR_POLY.bit_length() - 1 == PARITY_BITS

# degree of codeword bit i is CODE_BITS-1-i; syndrome table [j-1][i] = alpha^((j)(95-i))
_SYNDROME_POW = np.array(
    [[(j * (CODE_BITS - 1 - i)) % GF_ORDER for i in range(CODE_BITS)]
     for j in range(1, 2 * T_ERRORS + 1)],
    dtype=np.int64,
)
_SYNDROME_TERMS = _EXP_NP[_SYNDROME_POW]  # (10, 96) field elements


def _check_bits(bits: Sequence[int], n: int, name: str) -> list[int]:
    vals = [int(b) for b in bits]
    if len(vals) != n:
        raise ValueError(f"{name} must have exactly {n} bits, got {len(vals)}")
    if any(v not in (0, 1) for v in vals):
        raise ValueError(f"{name} must contain only 0/1 values")
    return vals


def pack_payload(text: str) -> list[int]:
    """Pack up to 8 ASCII characters into 56 bits, 7 bits per char MSB first.

    Shorter texts are right-padded with NUL before packing.
    """
    if len(text) > PAYLOAD_CHARS:
        raise PayloadError(f"payload text longer than {PAYLOAD_CHARS} characters: {text!r}")
    for ch in text:
        if ord(ch) >= 128:
            raise PayloadError(f"non-ASCII character in payload: {ch!r}")
    padded = text + "\x00" * (PAYLOAD_CHARS - len(text))
    bits: list[int] = []
    for ch in padded:
        code = ord(ch)
        bits.extend((code >> (BITS_PER_CHAR - 1 - k)) & 1 for k in range(BITS_PER_CHAR))
    return bits


def unpack_payload(bits: Sequence[int]) -> str:
    """Inverse of pack_payload; trailing NUL padding is stripped."""
    vals = _check_bits(bits, PAYLOAD_BITS, "payload")
    chars = []
    for i in range(PAYLOAD_CHARS):
        code = 0
        for b in vals[BITS_PER_CHAR * i : BITS_PER_CHAR * (i + 1)]:
            code = (code << 1) | b
        chars.append(chr(code))
    return "".join(chars).rstrip("\x00")


def _gf2_mod(value: int, modulus: int, mod_deg: int) -> int:
    d = value.bit_length() - 1
    while d >= mod_deg:
        value ^= modulus << (d - mod_deg)
        d = value.bit_length() - 1
    return value


def bch_encode(payload: Sequence[int]) -> list[int]:
    """Systematic encode: payload | 40 parity bits | 4 zero pad bits.

    The codeword polynomial is m(x)*x^40 + (m(x)*x^40 mod g(x)), with
    payload bit 0 as the highest-degree message coefficient.
    """
    msg = _check_bits(payload, PAYLOAD_BITS, "payload")
    m_int = 0
    for b in msg:
        m_int = (m_int << 1) | b
    parity_int = _gf2_mod(m_int << PARITY_BITS, GENERATOR_POLY, PARITY_BITS)
    parity = [(parity_int >> (PARITY_BITS - 1 - k)) & 1 for k in range(PARITY_BITS)]
    return msg + parity + [0] * PAD_BITS


def bch_decode(noisy: Sequence[int]) -> Optional[list[int]]:
    """Correct up to 5 bit errors in the 96 code bits and return the payload.

    Pad bits (indices 96..99) are ignored. Returns None when the error
    pattern is uncorrectable; this counts as a decode miss.
    """
    word = _check_bits(noisy, CODEWORD_BITS, "codeword")
    code = np.asarray(word[:CODE_BITS], dtype=bool)

    terms = _SYNDROME_TERMS[:, code]
    syn = [int(np.bitwise_xor.reduce(row)) if row.size else 0 for row in terms]
    if not any(syn):
        return word[:PAYLOAD_BITS]

    # Berlekamp-Massey for the error locator polynomial over GF(256)
    cur = [1] + [0] * (2 * T_ERRORS)
    prev = [1] + [0] * (2 * T_ERRORS)
    deg_l = 0
    shift = 1
    last_disc = 1
    for n in range(2 * T_ERRORS):
        disc = syn[n]
        for i in range(1, deg_l + 1):
            disc ^= _gf_mul(cur[i], syn[n - i])
        if disc == 0:
            shift += 1
            continue
        coef = _gf_mul(disc, _gf_inv(last_disc))
        if 2 * deg_l <= n:
            saved = cur[:]
            for i in range(len(prev) - shift):
                cur[i + shift] ^= _gf_mul(coef, prev[i])
            deg_l = n + 1 - deg_l
            prev = saved
            last_disc = disc
            shift = 1
        else:
            for i in range(len(prev) - shift):
                cur[i + shift] ^= _gf_mul(coef, prev[i])
            shift += 1
    if deg_l > T_ERRORS:
        return None

    # Chien search across the full field; roots map to error degrees
    locator = [(i, c) for i, c in enumerate(cur[: deg_l + 1]) if c]
    e = np.arange(GF_ORDER, dtype=np.int64)
    acc = np.zeros(GF_ORDER, dtype=np.int64)
    for i, c in locator:
        acc ^= _EXP_NP[(_LOG[c] + i * e) % GF_ORDER]
    root_exps = np.nonzero(acc == 0)[0]  # exponents e with locator(alpha^e) = 0
    if len(root_exps) != deg_l:
        return None

    error_degrees = (GF_ORDER - root_exps) % GF_ORDER
    if np.any(error_degrees >= CODE_BITS):
        # error located in the shortened (never transmitted) region
        return None
    corrected = word[:CODE_BITS]
    for d in error_degrees:
        idx = CODE_BITS - 1 - int(d)
        corrected[idx] ^= 1
    return corrected[:PAYLOAD_BITS]


def encode_text(text: str) -> list[int]:
    """pack_payload followed by bch_encode."""
    return bch_encode(pack_payload(text))


def decode_text(noisy: Sequence[int]) -> Optional[str]:
    """bch_decode followed by unpack_payload; None on decode failure."""
    payload = bch_decode(noisy)
    if payload is None:
        return None
    return unpack_payload(payload)
