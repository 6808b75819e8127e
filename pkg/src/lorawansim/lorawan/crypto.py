"""LoRaWAN 1.0.4 cryptographic primitives.

MIC values are the first four bytes of AES-128-CMAC; data-frame MICs are
computed over a B0 block prepended to the frame bytes.  Payload secrecy
uses AES-CTR-style keystream blocks (A_i) encrypted in ECB mode and XORed
with the payload, which makes encryption its own inverse.  Join-accepts
are encrypted with the AES *decrypt* primitive so constrained devices can
recover them using their encrypt hardware.
"""

from __future__ import annotations

from cryptography.hazmat.primitives import cmac
from cryptography.hazmat.primitives.ciphers import Cipher, algorithms, modes

UPLINK = 0
DOWNLINK = 1

AES_BLOCK = 16


def _check_key(key: bytes) -> None:
    if len(key) != 16:
        raise ValueError(f"AES-128 key must be 16 bytes, got {len(key)}")


def aes_cmac(key: bytes, message: bytes) -> bytes:
    """Full 16-byte AES-128-CMAC tag."""
    _check_key(key)
    mac = cmac.CMAC(algorithms.AES(key))
    mac.update(message)
    return mac.finalize()


def aes_ecb_encrypt(key: bytes, data: bytes) -> bytes:
    _check_key(key)
    if len(data) % AES_BLOCK:
        raise ValueError("data must be a whole number of AES blocks")
    enc = Cipher(algorithms.AES(key), modes.ECB()).encryptor()
    return enc.update(data) + enc.finalize()


def aes_ecb_decrypt(key: bytes, data: bytes) -> bytes:
    _check_key(key)
    if len(data) % AES_BLOCK:
        raise ValueError("data must be a whole number of AES blocks")
    dec = Cipher(algorithms.AES(key), modes.ECB()).decryptor()
    return dec.update(data) + dec.finalize()


def _b0_block(direction: int, dev_addr: int, fcnt32: int, msg_len: int) -> bytes:
    return (b"\x49" + b"\x00" * 4 + bytes([direction])
            + dev_addr.to_bytes(4, "little") + fcnt32.to_bytes(4, "little")
            + b"\x00" + bytes([msg_len]))


def data_mic(nwk_skey: bytes, msg: bytes, direction: int, dev_addr: int,
             fcnt32: int) -> bytes:
    """4-byte MIC for a data frame (msg = MHDR..FRMPayload)."""
    b0 = _b0_block(direction, dev_addr, fcnt32, len(msg))
    return aes_cmac(nwk_skey, b0 + msg)[:4]


def join_mic(key: bytes, msg: bytes) -> bytes:
    """4-byte MIC for join-request / join-accept (no B0 block)."""
    return aes_cmac(key, msg)[:4]


def crypt_frm_payload(key: bytes, payload: bytes, direction: int,
                      dev_addr: int, fcnt32: int) -> bytes:
    """En/decrypt an FRMPayload; the operation is an involution."""
    _check_key(key)
    if not payload:
        return b""
    blocks = bytearray()
    for i in range(1, (len(payload) + AES_BLOCK - 1) // AES_BLOCK + 1):
        a_i = (b"\x01" + b"\x00" * 4 + bytes([direction])
               + dev_addr.to_bytes(4, "little") + fcnt32.to_bytes(4, "little")
               + b"\x00" + bytes([i]))
        blocks += aes_ecb_encrypt(key, a_i)
    return bytes(p ^ s for p, s in zip(payload, blocks))


def derive_session_keys(app_key: bytes, app_nonce: int, net_id: int,
                        dev_nonce: int) -> tuple[bytes, bytes]:
    """(nwk_skey, app_skey) from the OTAA join parameters."""
    _check_key(app_key)
    tail = (app_nonce.to_bytes(3, "little") + net_id.to_bytes(3, "little")
            + dev_nonce.to_bytes(2, "little") + b"\x00" * 7)
    nwk_skey = aes_ecb_encrypt(app_key, b"\x01" + tail)
    app_skey = aes_ecb_encrypt(app_key, b"\x02" + tail)
    return nwk_skey, app_skey


def encrypt_join_accept(app_key: bytes, plaintext: bytes) -> bytes:
    """Server-side join-accept encryption (AES decrypt primitive)."""
    if len(plaintext) not in (16, 32):
        raise ValueError("join-accept body incl. MIC must be 16 or 32 bytes")
    return aes_ecb_decrypt(app_key, plaintext)


def decrypt_join_accept(app_key: bytes, ciphertext: bytes) -> bytes:
    """Device-side join-accept recovery (AES encrypt primitive)."""
    if len(ciphertext) not in (16, 32):
        raise ValueError("join-accept body incl. MIC must be 16 or 32 bytes")
    return aes_ecb_encrypt(app_key, ciphertext)
