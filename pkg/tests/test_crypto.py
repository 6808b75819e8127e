import random

import pytest
from cryptography.hazmat.primitives import cmac as _cmac
from cryptography.hazmat.primitives.ciphers import Cipher, algorithms, modes

from lorawansim.lorawan import crypto

KEY = bytes.fromhex("2b7e151628aed2a6abf7158809cf4f3c")

RFC4493_MSG = bytes.fromhex(
    "6bc1bee22e409f96e93d7e117393172a"
    "ae2d8a571e03ac9c9eb76fac45af8e51"
    "30c81c46a35ce411e5fbc1191a0a52ef"
    "f69f2445df4f9b17ad2b417be66c3710")

RFC4493_VECTORS = [
    (b"", "bb1d6929e95937287fa37d129b756746"),
    (RFC4493_MSG[:16], "070a16b46b4d4144f79bdd9dd04a287c"),
    (RFC4493_MSG[:40], "dfa66747de9ae63030ca32611497c827"),
    (RFC4493_MSG[:64], "51f0bebf7e3b9d92fc49741779363cfe"),
]


def independent_ecb_encrypt(key, data):
    enc = Cipher(algorithms.AES(key), modes.ECB()).encryptor()
    return enc.update(data) + enc.finalize()


@pytest.mark.parametrize("message,expected", RFC4493_VECTORS)
def test_rfc4493_cmac_vectors(message, expected):
    assert crypto.aes_cmac(KEY, message).hex() == expected


def test_key_length_enforced():
    with pytest.raises(ValueError):
        crypto.aes_cmac(b"short", b"")


def test_data_mic_b0_construction():
    # Rebuild the B0 block by hand and CMAC it independently.
    msg = b"\x40\x04\x03\x02\x01\x00\x05\x00\x01hello"
    dev_addr, fcnt = 0x01020304, 5
    mic = crypto.data_mic(KEY, msg, crypto.UPLINK, dev_addr, fcnt)
    b0 = (b"\x49" + b"\x00" * 4 + b"\x00" + dev_addr.to_bytes(4, "little")
          + fcnt.to_bytes(4, "little") + b"\x00" + bytes([len(msg)]))
    ref = _cmac.CMAC(algorithms.AES(KEY))
    ref.update(b0 + msg)
    assert mic == ref.finalize()[:4]


def test_mic_detects_single_bit_tamper():
    msg = bytearray(b"\x40\x04\x03\x02\x01\x00\x05\x00\x01payload")
    good = crypto.data_mic(KEY, bytes(msg), crypto.UPLINK, 0x01020304, 5)
    rng = random.Random(3)
    for _ in range(50):
        flipped = bytearray(msg)
        flipped[rng.randrange(len(msg))] ^= 1 << rng.randrange(8)
        bad = crypto.data_mic(KEY, bytes(flipped), crypto.UPLINK, 0x01020304, 5)
        assert bad != good


def test_crypt_empty_payload():
    assert crypto.crypt_frm_payload(KEY, b"", crypto.UPLINK, 1, 1) == b""


def test_crypt_involution_random_payloads():
    rng = random.Random(7)
    for _ in range(200):
        n = rng.randrange(0, 256)
        payload = rng.randbytes(n)
        addr = rng.getrandbits(32)
        fcnt = rng.getrandbits(32)
        direction = rng.choice([crypto.UPLINK, crypto.DOWNLINK])
        once = crypto.crypt_frm_payload(KEY, payload, direction, addr, fcnt)
        twice = crypto.crypt_frm_payload(KEY, once, direction, addr, fcnt)
        assert twice == payload


def test_zero_block_equals_encrypted_a1():
    # A 16-byte zero payload XORed with the keystream is the keystream
    # itself: the encrypted A1 counter block.
    out = crypto.crypt_frm_payload(KEY, bytes(16), crypto.UPLINK, 0x01020304, 256)
    assert out.hex() == "09571c53df68d8cc7b3828def0f811e3"
    a1 = (b"\x01" + b"\x00" * 4 + b"\x00" + (0x01020304).to_bytes(4, "little")
          + (256).to_bytes(4, "little") + b"\x00\x01")
    assert out == independent_ecb_encrypt(KEY, a1)


def test_session_key_derivation_pinned():
    nwk, app = crypto.derive_session_keys(KEY, 0, 0, 0)
    assert nwk.hex() == "7e59379b5233969d25a5ad2ce335cb3e"
    assert app.hex() == "1fb0c23bd209ac911ee3ab8a2d85ebcd"
    # Independent reconstruction of the derivation blocks.
    tail = bytes(15)
    assert nwk == independent_ecb_encrypt(KEY, b"\x01" + tail)
    assert app == independent_ecb_encrypt(KEY, b"\x02" + tail)


def test_session_keys_change_with_dev_nonce():
    nwk0, app0 = crypto.derive_session_keys(KEY, 0x112233, 0x13, 0x0001)
    nwk1, app1 = crypto.derive_session_keys(KEY, 0x112233, 0x13, 0x0002)
    assert nwk0 != nwk1 and app0 != app1


def test_session_key_derivation_deterministic():
    a = crypto.derive_session_keys(KEY, 0xABCDEF, 0x13, 0xCAFE)
    b = crypto.derive_session_keys(KEY, 0xABCDEF, 0x13, 0xCAFE)
    assert a == b


def test_join_accept_roundtrip_16_bytes():
    rng = random.Random(11)
    for _ in range(50):
        body = rng.randbytes(16)
        wire = crypto.encrypt_join_accept(KEY, body)
        assert crypto.decrypt_join_accept(KEY, wire) == body


def test_join_accept_device_decrypts_with_encrypt_primitive():
    body = bytes(range(16))
    wire = crypto.encrypt_join_accept(KEY, body)
    # The server used the AES decrypt direction, so plain ECB encryption
    # must recover the body.
    assert independent_ecb_encrypt(KEY, wire) == body


def test_join_accept_pinned_ciphertext():
    body = ((0x00CAFE).to_bytes(3, "little") + (0x000013).to_bytes(3, "little")
            + (0x26011BDA).to_bytes(4, "little") + bytes([0, 1]))
    mic = crypto.join_mic(KEY, b"\x20" + body)
    assert mic.hex() == "8fd764e8"
    assert crypto.encrypt_join_accept(KEY, body + mic).hex() == \
        "9da8e2f248d34b7eae56d7a32c330905"


def test_join_accept_bad_length():
    with pytest.raises(ValueError):
        crypto.encrypt_join_accept(KEY, bytes(20))


def test_nonempty_ciphertext_never_equals_plaintext():
    # Keystream collision for payloads >= 4 bytes is negligible; assert
    # plain inequality over a sample of random payloads.
    rng = random.Random(31)
    for _ in range(100):
        payload = rng.randbytes(rng.randrange(4, 64))
        out = crypto.crypt_frm_payload(KEY, payload, crypto.UPLINK,
                                       rng.getrandbits(32), rng.getrandbits(32))
        assert out != payload
