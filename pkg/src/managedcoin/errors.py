"""Exception hierarchy. Every error carries a stable string ``code``."""


class ManagedCoinError(Exception):
    """Base class; ``code`` is the class name unless overridden."""

    @property
    def code(self) -> str:
        return type(self).__name__


class CodecError(ManagedCoinError):
    pass


class AmountOverflow(CodecError):
    pass


class TypeOverflow(CodecError):
    pass


class EmptyRoleSet(CodecError):
    pass


class NonzeroReservedBits(CodecError):
    pass


class Truncated(CodecError):
    pass


class BadVersion(CodecError):
    pass


class VarIntOverflow(CodecError):
    pass


class NonCanonicalVarInt(CodecError):
    pass


class NotP2PK(CodecError):
    pass


class TrailingBytes(CodecError):
    pass


class EmptyList(CodecError):
    pass


class BadScriptSig(CodecError):
    pass


class AccountError(ManagedCoinError):
    pass


class UnknownTarget(AccountError):
    pass


class UnknownAccount(AccountError):
    pass


class FrozenTarget(AccountError):
    pass


class TreeCycle(AccountError):
    pass


class PolicyError(ManagedCoinError):
    pass


class PermanenceViolation(PolicyError):
    pass


class BadParam(PolicyError):
    pass


class UnknownType(PolicyError):
    pass


class DecayRateExceedsMax(PolicyError):
    pass


class ValidationError(ManagedCoinError):
    pass


class SignatureInvalid(ValidationError):
    pass


class MissingURole(ValidationError):
    pass


class FrozenAccount(ValidationError):
    pass


class NotCovered(ValidationError):
    pass


class RoleNotHeld(ValidationError):
    pass


class RoleDisabledByPolicy(ValidationError):
    pass


class CoinCreationWithoutC(ValidationError):
    pass


class CoinCreationLimitExceeded(ValidationError):
    pass


class FeeBelowMinimum(ValidationError):
    pass


class LDepthViolation(ValidationError):
    pass


class DoubleSpend(ValidationError):
    pass


class RoleRevoked(ValidationError):
    pass


class MissingInput(ValidationError):
    pass


class DuplicateTx(ValidationError):
    pass


class BadTxShape(ValidationError):
    pass


class MissingMinerURole(ValidationError):
    pass


class ExcessReward(ValidationError):
    pass


class BadCoinbaseShape(ValidationError):
    pass


class QuotaViolation(ValidationError):
    pass


class BadPoW(ValidationError):
    pass


class BadTarget(ValidationError):
    pass


class BadMerkleRoot(ValidationError):
    pass


class BadPrevHash(ValidationError):
    pass


class BadGenesis(ValidationError):
    pass


class ChainError(ManagedCoinError):
    pass


class UnknownParent(ChainError):
    pass


class InvalidAncestor(ChainError):
    """The block builds on a block that was rejected."""


class BadConfig(ChainError):
    pass


class NoURoleForMiner(ChainError):
    pass


class BadScenario(ManagedCoinError):
    pass


class CliError(ManagedCoinError):
    pass


class UnresolvableInput(CliError):
    pass


class SigningKeyMissing(CliError):
    pass
