"""Biometric key generation, binding and access control for health records."""

__version__ = "0.1.0"

from .audit import AuditLog, TagMap, record_access, record_integrity_digest, verify_chain
from .commitment import Commitment, CommitmentParams, IrisCode, commit, decommit
from .errors import BiokeyError, Reject
from .escrow import EscrowStore, deposit_key, enroll_key, expire_sweep, revoke_key
from .glcm import (
    GlcmFeatureExtractor,
    GlcmKeyGenerator,
    GlcmParams,
    GrayImage,
    TimedKey,
    attach_validity,
    compute_glcm,
    derive_key,
    extract_features,
    generate_key,
)
from .privacy import AccessContext, AttributeCatalog, EhrRecord, emergency_unlock, resolve_view
from .synth import NoiseModel, gen_population, perturb, run_far_frr
from .vault import MinutiaeTemplate, VaultHelperData, lock_key, lock_vault, unlock_key, unlock_vault

__all__ = [
    "AccessContext", "AttributeCatalog", "AuditLog", "BiokeyError", "Commitment", "CommitmentParams",
    "EhrRecord", "EscrowStore", "GlcmFeatureExtractor", "GlcmKeyGenerator", "GlcmParams", "GrayImage",
    "IrisCode", "MinutiaeTemplate", "NoiseModel", "Reject", "TagMap", "TimedKey", "VaultHelperData",
    "attach_validity", "commit", "compute_glcm", "decommit", "deposit_key", "derive_key",
    "emergency_unlock", "enroll_key", "expire_sweep", "extract_features", "gen_population",
    "generate_key", "lock_key", "lock_vault", "perturb", "record_access", "record_integrity_digest",
    "resolve_view", "revoke_key", "run_far_frr", "unlock_key", "unlock_vault", "verify_chain",
]
