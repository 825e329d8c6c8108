"""Verifiable execution traces for API-based agents.

Authenticate an agent's outputs against its published identity document
by proving each component exchange: notarized-transcript web proofs for
the core, attestation-proxy proofs for tools, and a compositional
verifier that ties them to one execution trace.
"""

from .agent_model import ExecutionTrace, StepRecord, ToolCall, run_agent
from .aid import (
    AgentIdentityDocument,
    ComponentEntry,
    TrustStore,
    VerificationMetadata,
    compute_id,
    instantiate_verifier,
    validate,
)
from .composer import (
    ComponentProof,
    ComposedVerifier,
    VerifiableExecutionTrace,
    prove_trace,
    valid_trace,
    verify_trace,
)
from .errors import (
    CapacityExceeded,
    ProtocolError,
    Rejected,
    ValidationError,
    VetError,
)
from .keys import SigningKey, verify_signature
from .templates import TemplateRegistry
from .webproof import WebProof, WebProofProver, authenticate

__version__ = "0.1.0"

__all__ = [
    "AgentIdentityDocument",
    "CapacityExceeded",
    "ComponentEntry",
    "ComponentProof",
    "ComposedVerifier",
    "ExecutionTrace",
    "ProtocolError",
    "Rejected",
    "SigningKey",
    "StepRecord",
    "TemplateRegistry",
    "ToolCall",
    "TrustStore",
    "ValidationError",
    "VerifiableExecutionTrace",
    "VerificationMetadata",
    "VetError",
    "WebProof",
    "WebProofProver",
    "authenticate",
    "compute_id",
    "instantiate_verifier",
    "prove_trace",
    "run_agent",
    "valid_trace",
    "validate",
    "verify_signature",
    "verify_trace",
]
