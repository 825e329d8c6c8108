"""Shared fixtures: a wired demo world and a small webproof test rig."""

import random

import pytest

from vet import demo as demo_mod
from vet.aid import (
    SCHEME_PROXY_TEE,
    SCHEME_TLS_NOTARY,
    AgentIdentityDocument,
    ComponentEntry,
    VerificationMetadata,
)
from vet.keys import SigningKey
from vet.notary import NotaryService
from vet.templates import TemplateRegistry
from vet.toytls import TargetServer
from vet import mockserver


@pytest.fixture(scope="session")
def demo_world():
    return demo_mod.build_world("0")


@pytest.fixture(scope="session")
def demo_result():
    return demo_mod.run_demo("0")


class WebProofRig:
    """A notary, an echo-style target server, and matching templates.

    Small enough to build fresh in each test; ``fresh_notary()`` rewires
    a new NotaryService around the same server so capacity and ledger
    state do not leak between tests.
    """

    def __init__(self, seed="rig", handler=None, secret_length="16"):
        self.registry = TemplateRegistry()
        self.inject_uid = self.registry.register(
            {
                "type": "inject",
                "kind": "tool",
                "method": "POST",
                "path": "/v1/echo",
                "headers": [
                    {"name": "Host", "value": "echo.test"},
                    {"name": "X-Api-Key", "secret": "token", "length": secret_length},
                ],
                "body": {"message": ""},
                "input_pointer": "/message",
            }
        )
        self.parse_uid = self.registry.register(
            {"type": "parse", "kind": "tool", "output_pointer": "/echo"}
        )
        self.notary_key = SigningKey.from_seed(f"{seed}:notary")
        self.server_key = SigningKey.from_seed(f"{seed}:server")
        self.server = TargetServer(
            "echo.test",
            handler or mockserver.make_echo_handler(),
            self.server_key,
            [self.notary_key.public_string],
        )
        self.service = NotaryService(
            self.notary_key, {"echo.test": self.server}.__getitem__, max_sessions=10**6
        )
        self.entry = ComponentEntry(
            name="echo",
            endpoint="https://echo.test/v1/echo",
            injection_algorithm_uid=self.inject_uid,
            parsing_algorithm_uid=self.parse_uid,
            verification=VerificationMetadata(
                SCHEME_TLS_NOTARY,
                {
                    "protocol_version": "commit-then-key-release/1",
                    "notary_public_key": self.notary_key.public_string,
                },
            ),
        )

    def fresh_notary(self):
        self.service = NotaryService(
            self.notary_key, {"echo.test": self.server}.__getitem__, max_sessions=10**6
        )
        return self.service


@pytest.fixture
def rig():
    return WebProofRig()


@pytest.fixture
def rng():
    return random.Random(1234)
