"""Exception hierarchy shared by every biokey module."""


class BiokeyError(Exception):
    """Base class for all biokey errors."""


# key generation
class NoPairs(BiokeyError):
    """The GLCM offset leaves no in-bounds pixel pair."""


class DegenerateCorrelation(BiokeyError):
    """A GLCM marginal has zero variance, so correlation is undefined."""


class ZeroProduct(BiokeyError):
    """The feature product is zero or non-finite; pick another image."""


class NonPositiveDuration(BiokeyError):
    pass


# vault
class Overflow(BiokeyError):
    """A coefficient does not fit the declared field width."""


class TemplateTooShort(BiokeyError):
    pass


class ExpiredHelper(BiokeyError):
    pass


class MatchBelowThreshold(BiokeyError):
    """Rejection: the query does not match the enrolled template."""


class RootRecoveryFailure(BiokeyError):
    """Decoded coefficients do not re-expand to an integer root set."""


# ecc
class SymbolOutOfField(BiokeyError):
    pass


class MessageOutOfRange(BiokeyError):
    pass


class LengthMismatch(BiokeyError):
    pass


# commitment
class Reject(BiokeyError):
    """Decommit refused to release the key.

    ``reason`` is one of THRESHOLD_EXCEEDED, ECC_FAILURE, DIGEST_MISMATCH.
    """

    THRESHOLD_EXCEEDED = "ThresholdExceeded"
    ECC_FAILURE = "EccFailure"
    DIGEST_MISMATCH = "DigestMismatch"
    REASONS = (THRESHOLD_EXCEEDED, ECC_FAILURE, DIGEST_MISMATCH)

    def __init__(self, reason: str, detail: str = ""):
        super().__init__(f"{reason}: {detail}" if detail else reason)
        self.reason = reason


# escrow
class ActiveKeyExists(BiokeyError):
    """The physician already holds an ACTIVE key for this patient."""


class IdentityMismatch(BiokeyError):
    pass


class KeyExpired(BiokeyError):
    pass


class NotOwner(BiokeyError):
    pass


class NotFound(BiokeyError):
    pass


# privacy
class DecryptFailure(BiokeyError):
    pass


class NotEnrolled(BiokeyError):
    pass


class AuditWriteError(BiokeyError):
    """The audit store could not be written; fatal for the caller."""
