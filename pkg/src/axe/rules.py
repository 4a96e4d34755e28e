"""Built-in security check model for bridge contracts.

Three categories split by workflow stage, six perspectives, and the security
features that witness each perspective.  Features inside a perspective are
alternatives (any witness suffices); perspectives inside a category are all
required.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

RULES_VERSION = "1.0"


@dataclass(frozen=True)
class Feature:
    name: str
    usage: str
    tags: tuple[str, ...]


@dataclass(frozen=True)
class Perspective:
    id: str
    title: str
    features: tuple[Feature, ...]
    combinator: str = "any"

    def witness_tags(self) -> frozenset[str]:
        return frozenset(t for f in self.features for t in f.tags)


@dataclass(frozen=True)
class Category:
    id: str
    title: str
    perspectives: tuple[str, ...]
    combinator: str = "all"


@dataclass(frozen=True)
class RuleSet:
    version: str
    categories: tuple[Category, ...]
    perspectives: tuple[Perspective, ...]
    roles: tuple[tuple[str, tuple[str, ...]], ...]
    # tags a matcher may attach that never witness coverage on their own
    informational_tags: tuple[tuple[str, str], ...] = ()

    def perspective(self, pid: str) -> Perspective:
        return next(p for p in self.perspectives if p.id == pid)

    def category(self, cid: str) -> Category:
        return next(c for c in self.categories if c.id == cid)

    def categories_for(self, role: str) -> tuple[Category, ...]:
        ids = dict(self.roles)[role]
        return tuple(self.category(c) for c in ids)

    def required(self, role: str) -> tuple[str, ...]:
        out: list[str] = []
        for cat in self.categories_for(role):
            out.extend(p for p in cat.perspectives if p not in out)
        return tuple(out)


DEFAULT_RULES = RuleSet(
    version=RULES_VERSION,
    categories=(
        Category("C1", "DepositAndLock", ("P1", "P2")),
        Category("C2", "CrosschainRouter", ("P3",)),
        Category("C3", "AuthorizationAndWithdrawal", ("P4", "P5", "P6")),
    ),
    perspectives=(
        Perspective("P1", "Success check for the deposit", (
            Feature("Balance of bridge after deposit", "Comparison with balance before deposit",
                    ("bridge-balance-comparison",)),
            Feature("Balance of user", "Comparison with the deposit amount",
                    ("user-balance-vs-deposit-amount",)),
            Feature("Liquidity of bridge", "Comparison with deposit threshold", ("liquidity-threshold",)),
        )),
        Perspective("P2", "Validation check for arguments of user", (
            Feature("Arguments of public function", "Comparison with logic condition", ("function-argument",)),
            Feature("Arguments of user message", "Comparison with logic condition", ("caller-argument",)),
        )),
        Perspective("P3", "Correctness check for cross-chain router", (
            Feature("Bridge-supported token/chain", "Comparison with ID of destination", ("support-id",)),
            Feature("Address of external invocation", "Comparison with 0 address", ("external-address-zero",)),
        )),
        Perspective("P4", "Validation check for verification", (
            Feature("Signature and Signatory", "Comparison with cross-chain message",
                    ("signature-comparison", "signatory-authorization")),
            Feature("Timeout of signature", "Comparison with on-chain time status (e.g., timestamp, blocknumber)",
                    ("timeout-comparison",)),
        )),
        Perspective("P5", "Check for repetitive withdrawal", (
            Feature("List recording the withdrawal", "Consultation on the lists (i.e., mapping variables)",
                    ("record-list-lookup",)),
        )),
        Perspective("P6", "Correctness check for releasing", (
            Feature("Receiver address", "Comparison with user-specified address or 0 address",
                    ("receiver-address",)),
        )),
    ),
    roles=(("source", ("C1", "C2")), ("destination", ("C2", "C3"))),
    informational_tags=(
        ("signature-validity", "P4"),
    ),
)


def dump_rules(rules: RuleSet = DEFAULT_RULES) -> str:
    return json.dumps(asdict(rules), indent=2, sort_keys=True) + "\n"


def load_rules(text: str) -> RuleSet:
    doc = json.loads(text)
    return RuleSet(
        version=doc["version"],
        categories=tuple(
            Category(c["id"], c["title"], tuple(c["perspectives"]), c["combinator"]) for c in doc["categories"]
        ),
        perspectives=tuple(
            Perspective(
                p["id"],
                p["title"],
                tuple(Feature(f["name"], f["usage"], tuple(f["tags"])) for f in p["features"]),
                p["combinator"],
            )
            for p in doc["perspectives"]
        ),
        roles=tuple((r[0], tuple(r[1])) for r in doc["roles"]),
        informational_tags=tuple((t[0], t[1]) for t in doc["informational_tags"]),
    )
