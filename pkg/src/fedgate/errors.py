"""Exception hierarchy shared by all fedgate components.

Every failure mode named in an operation contract has its own class so
callers (and tests) can match on type instead of parsing messages.
"""


class FedgateError(Exception):
    """Base class for all fedgate errors."""


# --- permission model -------------------------------------------------------

class UnknownPrincipal(FedgateError):
    """A referenced user or group is not registered in the model."""

class UnknownService(FedgateError):
    """A referenced service is not registered."""

class UnknownSubject(FedgateError):
    """A referenced subject id is not registered."""

class DuplicateEntry(FedgateError):
    """An add would insert a pair/id that is already present."""

class MissingEntry(FedgateError):
    """A remove references a pair that is not present."""

class MaskExceedsCreator(FedgateError):
    """A subject mask contains a permission its creator does not hold."""


# --- policy engine ----------------------------------------------------------

class DuplicatePolicyId(FedgateError):
    """Policy ids must be unique within a repository."""

class MalformedConstraint(FedgateError):
    """A policy constraint or field fails validation."""

class UnknownPolicy(FedgateError):
    """No policy with the given id exists."""

class NoSuchPath(FedgateError):
    """A namespace path (or one of its ancestors) does not exist."""

class ParentNotDirectory(FedgateError):
    """ACL inheritance requires a directory parent."""


# --- authentication ---------------------------------------------------------

class UnknownUser(FedgateError):
    """Username not present in the host table."""

class BadPassword(FedgateError):
    """Password does not match the host table entry."""

class SourceNotAllowed(FedgateError):
    """Source address not listed for this user."""

class SessionExpired(FedgateError):
    """Gateway session is unknown or past its lifetime."""

class HandshakeFailure(FedgateError):
    """The handshake proof did not verify."""

class TicketExpired(FedgateError):
    """Handshake ticket is past its lifetime at the issuer's clock."""

class InvalidMac(FedgateError):
    """Integrity tag did not verify."""

class NotRenewer(FedgateError):
    """The renewing principal is not the token's designated renewer."""

class TokenExpired(FedgateError):
    """Delegation token past currentExpiry."""

class MaxLifetimeExceeded(FedgateError):
    """Renewal attempted after the token's absolute maximum lifetime."""

class UnknownNode(FedgateError):
    """Node id not present in the topology."""


# --- cluster simulator ------------------------------------------------------

class DuplicateNode(FedgateError):
    """Node already registered."""

class AuthenticationRequired(FedgateError):
    """Secure mode demands a valid ticket for this operation."""

class InsufficientNodes(FedgateError):
    """Not enough live DataNodes to satisfy a replica placement."""

class NoLiveReplica(FedgateError):
    """Every replica of the block is on a dead node."""

class FileExists(FedgateError):
    """Write-once violation: the path already exists."""

class Unauthorized(FedgateError):
    """The access decision for this call was Deny."""

class TokenInvalid(FedgateError):
    """A presented block/delegation token failed validation."""


# --- broker -----------------------------------------------------------------

class CertificateExpired(FedgateError):
    """Session certificate past its lifetime."""

class ServiceNotPermitted(FedgateError):
    """Target service is outside the certificate's permitted set."""

class DuplicateEnforcer(FedgateError):
    """An enforcer is already registered for this NameNode."""


# --- audit store ------------------------------------------------------------

class MalformedRecord(FedgateError):
    """Audit record is missing fields or has invalid values."""

class UnorderedLocalLog(FedgateError):
    """A local log handed to aggregation is not timestamp-ordered."""

class InvalidWindow(FedgateError):
    """Query window start exceeds end (or has zero duration for rates)."""

class EmptyReport(FedgateError):
    """Deny-list emission requires a non-empty spike report."""


# --- config / CLI -----------------------------------------------------------

class ParseError(FedgateError):
    """Input document failed to parse; message carries the location."""

class DegenerateInput(FedgateError):
    """Regression input has no usable points."""
