"""
Paillier arithmetic on reals
============================

Additive homomorphic encryption with a toy key, then with a real key and
the fixed-point codec that carries residues and gradients.
"""

import numpy as np

from residue_vfl import paillier
from residue_vfl.numeric import RngStream

rng = RngStream(0)

# A toy key small enough to check by hand: n = 11 * 13 = 143
pk, sk = paillier.keypair_from_primes(11, 13)
c3, c4 = paillier.encrypt(pk, 3, rng), paillier.encrypt(pk, 4, rng)
print("Dec(Enc(3) + Enc(4)) =", paillier.decrypt(sk, paillier.add_cipher(pk, c3, c4)))
print("Dec(3 * Enc(4))      =", paillier.decrypt(sk, paillier.scalar_mult(pk, 3, c4)))
c100 = paillier.encrypt(pk, 100, rng)
print("100 + 100 mod 143    =", paillier.decrypt(sk, paillier.add_cipher(pk, c100, c100)))

# Reals go through a fixed-point codec; negatives live in the upper half of Z_n
pk, sk = paillier.keygen(512, RngStream(1))
codec = paillier.FixedPointCodec(pk.n, scale=10**6)
a = paillier.encrypt(pk, codec.encode(0.3), rng)
b = paillier.encrypt(pk, codec.encode(-0.2), rng)
print("0.3 + (-0.2) ->", codec.decode(paillier.decrypt(sk, paillier.add_cipher(pk, a, b))))

# The gradient path: plaintext features times encrypted residues
X = np.random.default_rng(0).normal(size=(8, 4))
r = np.random.default_rng(1).uniform(-1, 1, size=8)
enc_r = paillier.encrypt_vector(pk, codec, r, rng)
enc_g = paillier.encrypted_transpose_matvec(pk, codec, X, enc_r)
print("encrypted X^T r:", np.round(paillier.decrypt_vector(sk, codec, enc_g), 6))
print("plaintext X^T r:", np.round(X.T @ r, 6))
