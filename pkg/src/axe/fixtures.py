"""Hand-assembled bridge fixtures modelled on well-known bridge bug shapes.

Each builder returns a :class:`Fixture` holding bytecode, a manifest document
and the offsets of ``@marker`` lines so tests can point at specific checks.

    python -m axe.fixtures OUTDIR      # writes <name>.yaml + <name>.<contract>.hex
"""

from __future__ import annotations

import itertools
import sys
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from axe.bridge import BridgeDescriptor, load_manifest
from axe.evm.asm import _encode_push, _tokens, assemble

ADDRESS_MASK = (1 << 160) - 1

# 4-byte selectors and event topics (keccak-256 of the canonical signatures)
SEL = {
    "send(address,uint256,uint256)": 0x67DF93F2,
    "Receive(uint256,address,uint256,uint256,(uint8,bytes32,bytes32)[])": 0xA249E1DF,
    "deposit(address,address,uint256,uint256)": 0x20E8C565,
    "withdrawal(address,address,uint256,uint256,uint256,uint256)": 0xE8B1FC37,
    "depositTokens(address,uint256,bytes32)": 0x4D6DD4BD,
    "swap(address,uint256,uint256)": 0x9F1D0F59,
    "claimRadar(address,uint256,uint256)": 0xAA4A71EB,
    "claimPolka(address,uint256,uint256)": 0xC5A6D552,
    "deposit(address,uint256)": 0x47E7EF24,
    "withdraw((uint8,bytes32,bytes32,address)[],address,uint256,uint256)": 0xAF40A1C0,
    "depositNative(address,uint256)": 0x02279B4A,
    "depositAlien(address,address,uint256)": 0x1E6C22DE,
    "saveWithdrawNative(address,uint256,uint256)": 0x596CAE82,
    "saveWithdrawAlien(address,address,uint256,uint256)": 0x4D0A415F,
    "depositToken(address,address,uint256)": 0xFB0F97A8,
    "release(address,uint256,uint256)": 0xF297BE66,
    "getTokenMeta(address)": 0x930157FE,
    "ping()": 0x5C36B186,
    "pong()": 0xBC9748A1,
}
TOPIC = {
    "Transfer(address,address,uint256,uint256)":
        0x9ED053BB818FF08B8353CD46F78DB1F0799F31C9E4458FDB425C10ECCD2EFC44,
    "Deposit(address,address,uint256,uint256)":
        0xDCBC1C05240F31FF3AD067EF1EE35CE4997762752E3A095284754544F4C709D7,
    "TokensDeposited(address,uint256,bytes32)":
        0x01E1031ABB17D28BE57C5BE8FCEBFC14386C05B6F76CC69DE9D01ECB328F3646,
    "Swapped(address,uint256,uint256)":
        0x3A9A9F34F5831E9C8ECB66AB3AA308B2FF31EACA434615F6C9CADC656A9AF71C,
    "Deposited(address,uint256,uint256)":
        0x73A19DD210F1A7F902193214C0EE91DD35EE5B4D920CBA8D519ECA65A7B488CA,
    "NativeDeposit(address,uint256,uint256)":
        0x2D45CF213B0878E6582A0BDDC676C202F8F57ED3CD74E8CCF8955CE1359BD427,
    "AlienDeposit(address,address,uint256,uint256)":
        0x5B3A28058DD1C6BD11872BBC683FC0A857AAEB4BC761FB22975153C418C9D45A,
    "Released(address,uint256)":
        0xB21FB52D5749B80F3182F8C6992236B5E5576681880914484D7F4C9B062E619E,
    "Withdrawn(address,uint256)":
        0x7084F5476618D8E60B11EF0D7D3F06914655ADB8793E28FF7F018D4C76D505D5,
}


def sel(sig: str) -> int:
    return SEL[sig]


def name_of(sig: str) -> str:
    return sig.split("(", 1)[0]


_ids = itertools.count()


def fresh(stem: str = "L") -> str:
    return f"{stem}_{next(_ids)}"


# -- macros (each returns a list of asm lines that leaves the stack as documented) --


def arg(j: int, address: bool = False) -> list[str]:
    """Push calldata argument ``j``."""
    out = [f"PUSH {4 + 32 * j:#x}", "CALLDATALOAD"]
    return out + [f"PUSH20 {ADDRESS_MASK:#x}", "AND"] if address else out


def mapping(key: list[str], slot: int) -> list[str]:
    """Push keccak(key . slot), the storage key of ``mapping[key]``."""
    return key + ["PUSH 0", "MSTORE", f"PUSH {slot}", "PUSH 0x20", "MSTORE", "PUSH 0x40", "PUSH 0", "SHA3"]


def sload(key: list[str]) -> list[str]:
    return key + ["SLOAD"]


def sstore(key: list[str], value: list[str]) -> list[str]:
    return value + key + ["SSTORE"]


def require(cond: list[str], mark: str | None = None) -> list[str]:
    ok = fresh("ok")
    pre = [f"@{mark}"] if mark else []
    return cond + pre + [f"PUSH :{ok}", "JUMPI", "PUSH 0", "DUP1", "REVERT", f"{ok}:"]


def not_zero(value: list[str]) -> list[str]:
    return value + ["ISZERO", "ISZERO"]


def ge(a: list[str], b: list[str]) -> list[str]:
    """a >= b, written as !(a < b)."""
    return b + a + ["LT", "ISZERO"]


def gt(a: list[str], b: list[str]) -> list[str]:
    return b + a + ["GT"]


def eq(a: list[str], b: list[str]) -> list[str]:
    return b + a + ["EQ"]


def add(a: list[str], b: list[str]) -> list[str]:
    return b + a + ["ADD"]


def sub(a: list[str], b: list[str]) -> list[str]:
    return b + a + ["SUB"]


def mstore(offset: int, value: list[str]) -> list[str]:
    return value + [f"PUSH {offset:#x}", "MSTORE"]


def mload(offset: int) -> list[str]:
    return [f"PUSH {offset:#x}", "MLOAD"]


def emit(topic: int, data: list[list[str]], indexed: list[list[str]] = ()) -> list[str]:
    out: list[str] = []
    for k, word in enumerate(data):
        out += mstore(0x200 + 32 * k, word)
    for t in reversed(list(indexed)):
        out += t
    out += [f"PUSH32 {topic:#066x}", f"PUSH {32 * len(data):#x}", "PUSH 0x200", f"LOG{1 + len(indexed)}"]
    return out


def value_call(to: list[str], amount: list[str]) -> list[str]:
    return ["PUSH 0", "PUSH 0", "PUSH 0", "PUSH 0"] + amount + to + ["GAS", "CALL", "POP"]


def token_call(token: list[str], to: list[str], amount: list[str]) -> list[str]:
    """ERC20-style transfer(to, amount) with no value attached."""
    out = mstore(0x500, [f"PUSH4 {0xA9059CBB:#x}", "PUSH 0xe0", "SHL"])
    out += mstore(0x504, to) + mstore(0x524, amount)
    return out + ["PUSH 0x20", "PUSH 0x600", "PUSH 0x44", "PUSH 0x500", "PUSH 0"] + token + ["GAS", "CALL", "POP"]


def ecrecover(digest: list[str], v: list[str], r: list[str], s: list[str]) -> list[str]:
    """Push the recovered signer (precompile 1 via STATICCALL)."""
    out = mstore(0x80, digest) + mstore(0xA0, v) + mstore(0xC0, r) + mstore(0xE0, s)
    return out + ["PUSH 0x20", "PUSH 0x100", "PUSH 0x80", "PUSH 0x80", "PUSH 1", "GAS", "STATICCALL", "POP"] + mload(0x100)


def digest(words: list[list[str]]) -> list[str]:
    out: list[str] = []
    for k, w in enumerate(words):
        out += mstore(0x300 + 32 * k, w)
    return out + [f"PUSH {32 * len(words):#x}", "PUSH 0x300", "SHA3"]


def call_internal(label: str, args: list[list[str]], mark: str | None = None) -> list[str]:
    ret = fresh("ret")
    out = [f"@{mark}"] if mark else []
    out += [f"PUSH :{ret}"]
    for a in args:
        out += a
    return out + [f"PUSH :{label}", "JUMP", f"{ret}:"]


def credit_body(slot: int) -> list[str]:
    """Internal ``(ret, to, amount) -> ()``: balance[to] += amount."""
    return [
        "DUP2", "PUSH 0", "MSTORE", f"PUSH {slot}", "PUSH 0x20", "MSTORE", "PUSH 0x40", "PUSH 0", "SHA3",
        "DUP1", "SLOAD", "DUP3", "ADD", "SWAP1", "SSTORE", "POP", "POP", "JUMP",
    ]


def credit_args(to: list[str], amount: list[str]) -> list[list[str]]:
    # stack order expected by credit_body: ret, to, amount (amount on top)
    return [to, amount]


# -- contract assembly -------------------------------------------------------


@dataclass
class Contract:
    name: str
    address: str
    abi: list[dict] = field(default_factory=list)
    events: list[dict] = field(default_factory=list)
    storage: list[dict] = field(default_factory=list)
    bodies: list[tuple[str, int | None, list[str]]] = field(default_factory=list)
    internal: list[tuple[str, str]] = field(default_factory=list)

    def function(self, sig: str, kind: str, body: list[str], name: str | None = None) -> None:
        label = f"fn_{name_of(sig)}_{len(self.bodies)}"
        selector = sel(sig)
        self.abi.append({"selector": f"{selector:#010x}", "name": name or name_of(sig), "kind": kind})
        self.bodies.append((label, selector, body + ["STOP"]))

    def helper(self, label: str, name: str, body: list[str]) -> None:
        self.internal.append((label, name))
        self.bodies.append((label, None, body))

    def event(self, sig: str, kind: str) -> None:
        self.events.append({"topic0": f"{TOPIC[sig]:#066x}", "name": name_of(sig), "kind": kind})

    def slot(self, slot: int, meaning: str, name: str) -> None:
        self.storage.append({"slot": slot, "meaning": meaning, "name": name})

    def source(self) -> list[str]:
        out = ["PUSH 0", "CALLDATALOAD", "PUSH 0xe0", "SHR"]
        for label, selector, _ in self.bodies:
            if selector is not None:
                out += ["DUP1", f"PUSH4 {selector:#010x}", "EQ", f"PUSH :{label}", "JUMPI"]
        out += ["PUSH 0", "DUP1", "REVERT"]
        for label, _, body in self.bodies:
            out += [f"{label}:"] + body
        return out

    def build(self) -> tuple[bytes, dict[str, int], dict[str, int]]:
        lines, marks = strip_marks(self.source())
        code = assemble(lines)
        labels = _offsets(lines)[0]
        return code, marks, {lab: labels[lab] for lab, _ in self.internal}

    def entry(self) -> dict:
        code, _, entries = self.build()
        doc = {"name": self.name, "address": self.address, "code": "0x" + code.hex(), "abi": list(self.abi)}
        if self.events:
            doc["events"] = list(self.events)
        if self.storage:
            doc["storage"] = list(self.storage)
        if self.internal:
            doc["functions"] = [{"entry": entries[lab], "name": name} for lab, name in self.internal]
        return doc


def _offsets(lines: list[str]) -> tuple[dict[str, int], list[int]]:
    labels: dict[str, int] = {}
    pcs = []
    pc = 0
    for line in lines:
        pcs.append(pc)
        if line.endswith(":"):
            labels[line[:-1]] = pc
            pc += 1
            continue
        parts = line.split()
        mnem = parts[0].upper()
        if mnem.startswith("PUSH") and mnem != "PUSH0":
            if parts[1].startswith(":"):
                pc += 3
            else:
                pc += len(_encode_push(int(mnem[4:]) if mnem[4:] else None, int(parts[1], 0)))
        else:
            pc += 1
    return labels, pcs


def strip_marks(source: list[str]) -> tuple[list[str], dict[str, int]]:
    """Drop ``@name`` lines; a mark names the offset of the next JUMPI/JUMP (or next instruction)."""
    lines = _tokens(source)
    pending: list[tuple[str, int]] = []
    kept: list[str] = []
    for line in lines:
        if line.startswith("@"):
            pending.append((line[1:], len(kept)))
        else:
            kept.append(line)
    _, pcs = _offsets(kept)
    marks = {}
    for name, idx in pending:
        # point at the first jump after the mark (a check's JUMPI or a call's JUMP)
        j = idx
        while j < len(kept) and kept[j].split()[0].upper() not in ("JUMPI", "JUMP"):
            j += 1
        marks[name] = pcs[j] if j < len(kept) else pcs[idx]
    return kept, marks


@dataclass
class Fixture:
    name: str
    source: list[Contract]
    destination: list[Contract]
    pairings: list[dict]
    config: dict = field(default_factory=dict)
    source_chain: int = 1
    destination_chain: int = 56

    def contract(self, name: str) -> Contract:
        return next(c for c in self.source + self.destination if c.name == name)

    def marks(self, name: str) -> dict[str, int]:
        return self.contract(name).build()[1]

    def document(self) -> dict:
        bridge = {
            "name": self.name,
            "chains": [
                {"chain_id": self.source_chain, "role": "source", "contracts": [c.entry() for c in self.source]},
                {"chain_id": self.destination_chain, "role": "destination",
                 "contracts": [c.entry() for c in self.destination]},
            ],
            "pairings": list(self.pairings),
        }
        if self.config:
            bridge["config"] = dict(self.config)
        return {"bridge": bridge}

    def manifest_text(self) -> str:
        return yaml.safe_dump(self.document(), sort_keys=False, width=1 << 16)

    def descriptor(self) -> BridgeDescriptor:
        return load_manifest(self.manifest_text())

    def write(self, outdir: str | Path) -> Path:
        """Write the manifest with bytecode in sibling ``.hex`` files."""
        outdir = Path(outdir)
        outdir.mkdir(parents=True, exist_ok=True)
        doc = self.document()
        for chain in doc["bridge"]["chains"]:
            for c in chain["contracts"]:
                hex_name = f"{self.name}.{c['name']}.hex"
                (outdir / hex_name).write_text(c.pop("code") + "\n")
                c["bytecode"] = hex_name
        path = outdir / f"{self.name}.yaml"
        path.write_text(yaml.safe_dump(doc, sort_keys=False, width=1 << 16))
        return path


def pairing(event_sig: str, fn_sig: str, arg_map=None) -> dict:
    doc = {"deposit_event": f"{TOPIC[event_sig]:#066x}", "authorize_selector": f"{sel(fn_sig):#010x}"}
    if arg_map is not None:
        doc["arg_map"] = [{"event_arg": e, "param": p} for e, p in arg_map]
    return doc


def addr(n: int) -> str:
    return f"0x{n:040x}"


# -- fixtures ------------------------------------------------------------------

SEND = "send(address,uint256,uint256)"
RECEIVE = "Receive(uint256,address,uint256,uint256,(uint8,bytes32,bytes32)[])"
TRANSFER_EV = "Transfer(address,address,uint256,uint256)"


def fixture_a(patched: bool = False) -> Fixture:
    """Lock on the source, unlock on the destination without checking who signed."""
    src = Contract("ChainSwapSource", addr(0xA1))
    src.slot(0, "balance", "balance")
    src.slot(1, "support", "supportedChains")
    src.event(TRANSFER_EV, "deposit")
    src.function(SEND, "deposit", [
        *require(gt(arg(1), ["PUSH 0"])),
        *require(sload(mapping(arg(2), 1))),
        *require(ge(sload(mapping(["CALLER"], 0)), arg(1))),
        *sstore(mapping(["CALLER"], 0), sub(sload(mapping(["CALLER"], 0)), arg(1))),
        *emit(TOPIC[TRANSFER_EV], [arg(0, True), arg(1), arg(2)], indexed=[["CALLER"]]),
    ])

    dst = Contract("ChainSwapDestination", addr(0xA2))
    dst.slot(0, "balance", "balance")
    dst.slot(1, "recordList", "received")
    dst.slot(2, "support", "supportedChains")
    dst.slot(3, "authorization", "Quota")
    sig0 = add(arg(4), ["PUSH 0x24"])  # first tuple of the signature array
    body = [
        *require(sload(mapping(arg(0), 2))),
        *require(sload(mapping(arg(2), 1)) + ["ISZERO"]),
        *require(not_zero(arg(1, True))),
        *mstore(0x400, ecrecover(
            digest([arg(1, True), arg(2), arg(3)]),
            sig0 + ["CALLDATALOAD"],
            add(sig0, ["PUSH 0x20"]) + ["CALLDATALOAD"],
            add(sig0, ["PUSH 0x40"]) + ["CALLDATALOAD"],
        )),
        *require(not_zero(mload(0x400))),
    ]
    if patched:
        body += require(gt(sload(mapping(mload(0x400), 3)), ["PUSH 0"]), mark="quota")
    body += [
        *sstore(mapping(arg(2), 1), ["PUSH 1"]),
        *call_internal("credit", credit_args(arg(1, True), arg(3)), mark="transfer"),
    ]
    dst.function(RECEIVE, "authorize", body)
    dst.helper("credit", "_transfer", credit_body(0))
    return Fixture(
        "fixture_a_patched" if patched else "fixture_a", [src], [dst], [pairing(TRANSFER_EV, RECEIVE)],
    )


DEPOSIT_B = "deposit(address,address,uint256,uint256)"
WITHDRAWAL_B = "withdrawal(address,address,uint256,uint256,uint256,uint256)"
DEPOSIT_EV = "Deposit(address,address,uint256,uint256)"
ETH_TYPE = 1


def fixture_b(type_from_event: bool = False) -> Fixture:
    """Destination re-derives the token type instead of trusting the deposit record."""
    src = Contract("TypedSource", addr(0xB1))
    src.slot(1, "support", "supportedTokens")
    src.event(DEPOSIT_EV, "deposit")
    src.function(DEPOSIT_B, "deposit", [
        *require(eq(["CALLVALUE"], arg(2))),
        *require(ge(["SELFBALANCE"], arg(2))),
        *require(sload(mapping(arg(0, True), 1))),
        *sstore(["PUSH 2"], add(sload(["PUSH 2"]), ["PUSH 1"])),
        *emit(TOPIC[DEPOSIT_EV], [arg(0, True), arg(1, True), arg(2), arg(3)]),
    ], name="Deposit")

    dst = Contract("TypedDestination", addr(0xB2))
    dst.slot(0, "authorization", "relayers")
    dst.slot(1, "recordList", "processed")
    dst.slot(2, "support", "supportedTokens")
    body = [
        *require(arg(5) + ["TIMESTAMP", "GT", "ISZERO"]),
        *require(sload(mapping(["CALLER"], 0))),
        *require(sload(mapping(arg(4), 1)) + ["ISZERO"]),
        *require(not_zero(arg(1, True))),
        *require(sload(mapping(arg(0, True), 2))),
        *sstore(mapping(arg(4), 1), ["PUSH 1"]),
    ]
    typed = fresh("typed")
    if type_from_event:
        body += arg(3)
    else:
        body += [
            f"PUSH {ETH_TYPE}",
            "PUSH 3", "SLOAD", "ISZERO", f"PUSH :{typed}", "JUMPI",
            "POP",
            *mstore(0x500, [f"PUSH4 {sel('getTokenMeta(address)'):#x}", "PUSH 0xe0", "SHL"]),
            *mstore(0x504, arg(0, True)),
            "PUSH 0x20", "PUSH 0x600", "PUSH 0x24", "PUSH 0x500", "PUSH 3", "SLOAD", "GAS", "STATICCALL", "POP",
            *mload(0x600),
            f"{typed}:",
        ]
    erc20 = fresh("erc20")
    body += [
        "@type", "DUP1", f"PUSH {ETH_TYPE}", "EQ", "ISZERO", f"PUSH :{erc20}", "JUMPI",
        *value_call(arg(1, True), arg(2)),
        "STOP",
        f"{erc20}:",
        *token_call(arg(0, True), arg(1, True), arg(2)),
    ]
    dst.function(WITHDRAWAL_B, "withdraw", body, name="Withdrawal")
    return Fixture(
        "fixture_b_event_type" if type_from_event else "fixture_b", [src], [dst],
        [pairing(DEPOSIT_EV, WITHDRAWAL_B)],
    )


def complete_claim(to: int, amount: int, nonce: int, auth: int = 0, processed: int = 1) -> list[str]:
    """A withdrawal with every destination-side check in place, paying out in ETH."""
    return [
        *require(eq(["CHAINID"], ["PUSH 56"])),
        *require(sload(mapping(["CALLER"], auth))),
        *require(sload(mapping(arg(nonce), processed)) + ["ISZERO"]),
        *require(not_zero(arg(to, True))),
        *sstore(mapping(arg(nonce), processed), ["PUSH 1"]),
        *value_call(arg(to, True), arg(amount)),
    ]


def _claim_destination(name: str, address: str, sigs: list[str]) -> Contract:
    dst = Contract(name, address)
    dst.slot(0, "authorization", "relayers")
    dst.slot(1, "recordList", "processed")
    for s in sigs:
        dst.function(s, "withdraw", complete_claim(0, 1, 2))
    return dst


RADAR_DEP = "depositTokens(address,uint256,bytes32)"
POLKA_SWAP = "swap(address,uint256,uint256)"
CLAIM_RADAR = "claimRadar(address,uint256,uint256)"
CLAIM_POLKA = "claimPolka(address,uint256,uint256)"


def fixture_c() -> Fixture:
    """Two deposit contracts whose only check is a balance or a liquidity test."""
    radar = Contract("Radar", addr(0xC1))
    radar.slot(0, "balance", "balances")
    radar.event("TokensDeposited(address,uint256,bytes32)", "deposit")
    radar.function(RADAR_DEP, "deposit", [
        *require(ge(sload(mapping(["CALLER"], 0)), arg(1)), mark="radar_check"),
        *sstore(mapping(["CALLER"], 0), sub(sload(mapping(["CALLER"], 0)), arg(1))),
        *emit(TOPIC["TokensDeposited(address,uint256,bytes32)"], [arg(0, True), arg(1), arg(2)]),
    ])
    polka = Contract("Polkabridge", addr(0xC2))
    polka.slot(0, "liquidity", "liquidity")
    polka.event("Swapped(address,uint256,uint256)", "deposit")
    polka.function(POLKA_SWAP, "deposit", [
        *require(gt(sload(["PUSH 0"]), ["PUSH 0"]), mark="polka_check"),
        *sstore(["PUSH 0"], add(sload(["PUSH 0"]), arg(1))),
        *emit(TOPIC["Swapped(address,uint256,uint256)"], [arg(0, True), arg(1), arg(2)]),
    ])
    dst = _claim_destination("Claims", addr(0xC3), [CLAIM_RADAR, CLAIM_POLKA])
    return Fixture("fixture_c", [radar, polka], [dst], [
        pairing("TokensDeposited(address,uint256,bytes32)", CLAIM_RADAR),
        pairing("Swapped(address,uint256,uint256)", CLAIM_POLKA),
    ])


def complete_deposit(to: int, amount: int, support_key: list[str], bal: int = 0, sup: int = 1) -> list[str]:
    return [
        *require(gt(arg(amount), ["PUSH 0"])),
        *require(sload(mapping(support_key, sup))),
        *require(ge(sload(mapping(["CALLER"], bal)), arg(amount))),
        *sstore(mapping(["CALLER"], bal), sub(sload(mapping(["CALLER"], bal)), arg(amount))),
    ]


def _deposit_source(name: str, address: str) -> Contract:
    c = Contract(name, address)
    c.slot(0, "balance", "balance")
    c.slot(1, "support", "supportedTokens")
    c.slot(2, "other", "nonce")
    return c


DEPOSIT_D = "deposit(address,uint256)"
WITHDRAW_D = "withdraw((uint8,bytes32,bytes32,address)[],address,uint256,uint256)"


def fixture_d() -> Fixture:
    """Multi-signature withdrawal: a count guard around a signer-checking loop."""
    src = _deposit_source("MultisigSource", addr(0xD1))
    src.event("Deposited(address,uint256,uint256)", "deposit")
    src.function(DEPOSIT_D, "deposit", [
        *complete_deposit(0, 1, ["CHAINID"]),
        *emit(TOPIC["Deposited(address,uint256,uint256)"], [arg(0, True), arg(1), sload(["PUSH 2"])]),
    ])

    dst = Contract("MultisigDestination", addr(0xD2))
    dst.slot(0, "balance", "balance")
    dst.slot(1, "recordList", "processed")
    dst.slot(4, "other", "threshold")
    dst.slot(5, "authorization", "authorization")
    length = add(arg(0), ["PUSH 4"]) + ["CALLDATALOAD"]
    elem = ["PUSH 0x420", "MLOAD", "PUSH 0x80", "MUL"] + add(arg(0), ["PUSH 0x24"]) + ["ADD"]
    loop, done, end = fresh("loop"), fresh("done"), fresh("end")
    body = [
        *require(eq(["CHAINID"], ["PUSH 56"])),
        *require(sload(mapping(arg(3), 1)) + ["ISZERO"]),
        *require(not_zero(arg(1, True))),
        # if (sigs.length >= threshold) { ... }
        *sload(["PUSH 4"]), *length, "LT", "@c5", f"PUSH :{end}", "JUMPI",
        *mstore(0x420, ["PUSH 0"]),
        f"{loop}:",
        *length, *mload(0x420), "LT", "ISZERO", f"PUSH :{done}", "JUMPI",
        *require(eq(
            ecrecover(
                digest([arg(1, True), arg(2), arg(3)]),
                elem + ["CALLDATALOAD"],
                add(elem, ["PUSH 0x20"]) + ["CALLDATALOAD"],
                add(elem, ["PUSH 0x40"]) + ["CALLDATALOAD"],
            ),
            add(elem, ["PUSH 0x60"]) + ["CALLDATALOAD", f"PUSH20 {ADDRESS_MASK:#x}", "AND"],
        ), mark="c8"),
        "@r9",
        *sstore(mapping(arg(1, True), 5), add(sload(mapping(arg(1, True), 5)), ["PUSH 1"])),
        *mstore(0x420, add(mload(0x420), ["PUSH 1"])),
        f"PUSH :{loop}", "JUMP",
        f"{done}:",
        *require(eq(sload(mapping(arg(1, True), 5)), length), mark="c11"),
        *sstore(mapping(arg(3), 1), ["PUSH 1"]),
        *call_internal("credit", credit_args(arg(1, True), arg(2)), mark="r12"),
        f"{end}:",
    ]
    dst.function(WITHDRAW_D, "withdraw", body)
    dst.helper("credit", "_transfer", credit_body(0))
    return Fixture("fixture_d", [src], [dst], [pairing("Deposited(address,uint256,uint256)", WITHDRAW_D)])


NATIVE = "saveWithdrawNative(address,uint256,uint256)"
ALIEN = "saveWithdrawAlien(address,address,uint256,uint256)"


def fixture_case_study() -> Fixture:
    """Native and alien withdrawals that never check which token they release."""
    src = _deposit_source("VaultSource", addr(0xE1))
    src.event("NativeDeposit(address,uint256,uint256)", "deposit")
    src.event("AlienDeposit(address,address,uint256,uint256)", "deposit")
    src.function("depositNative(address,uint256)", "deposit", [
        *complete_deposit(0, 1, ["CHAINID"]),
        *emit(TOPIC["NativeDeposit(address,uint256,uint256)"], [arg(0, True), arg(1), sload(["PUSH 2"])]),
    ])
    src.function("depositAlien(address,address,uint256)", "deposit", [
        *complete_deposit(1, 2, arg(0, True)),
        *emit(TOPIC["AlienDeposit(address,address,uint256,uint256)"],
              [arg(0, True), arg(1, True), arg(2), sload(["PUSH 2"])]),
    ])

    dst = Contract("VaultDestination", addr(0xE2))
    dst.slot(0, "balance", "balance")
    dst.slot(1, "recordList", "processed")
    dst.slot(2, "authorization", "relayers")

    def save(to: int, amount: int, nonce: int) -> list[str]:
        return [
            *require(sload(mapping(["CALLER"], 2))),
            *require(sload(mapping(arg(nonce), 1)) + ["ISZERO"]),
            *require(not_zero(arg(to, True))),
            *sstore(mapping(arg(nonce), 1), ["PUSH 1"]),
            *call_internal("credit", credit_args(arg(to, True), arg(amount))),
        ]

    dst.function(NATIVE, "withdraw", save(0, 1, 2))
    dst.function(ALIEN, "withdraw", save(1, 2, 3))
    dst.helper("credit", "_transfer", credit_body(0))
    return Fixture("case_study", [src], [dst], [
        pairing("NativeDeposit(address,uint256,uint256)", NATIVE),
        pairing("AlienDeposit(address,address,uint256,uint256)", ALIEN),
    ])


RELEASE = "release(address,uint256,uint256)"


def fixture_two_deposits() -> Fixture:
    """Two deposit paths share one event, so the destination cannot tell them apart."""
    src = _deposit_source("SharedEventSource", addr(0xF1))
    src.event(DEPOSIT_EV, "deposit")
    src.function("depositNative(address,uint256)", "deposit", [
        *complete_deposit(0, 1, ["CHAINID"]),
        *emit(TOPIC[DEPOSIT_EV], [["PUSH 0"], arg(0, True), arg(1), ["PUSH 1"]]),
    ])
    src.function("depositToken(address,address,uint256)", "deposit", [
        *complete_deposit(1, 2, arg(0, True)),
        *emit(TOPIC[DEPOSIT_EV], [arg(0, True), arg(1, True), arg(2), ["PUSH 2"]]),
    ])
    dst = _claim_destination("SharedEventDestination", addr(0xF2), [RELEASE])
    return Fixture("two_deposits", [src], [dst], [pairing(DEPOSIT_EV, RELEASE)])


def fixture_minimal() -> Fixture:
    """One deposit, one release; used for graph-shape checks."""
    ev = "Deposited(address,uint256,uint256)"
    src = _deposit_source("MinimalSource", addr(0x11))
    src.event(ev, "deposit")
    src.function(DEPOSIT_D, "deposit", [
        *complete_deposit(0, 1, ["CHAINID"]),
        *emit(TOPIC[ev], [arg(1), sload(["PUSH 2"])], indexed=[["CALLER"], arg(0, True)]),
    ])
    dst = _claim_destination("MinimalDestination", addr(0x12), [])
    dst.event("Released(address,uint256)", "withdraw")
    dst.function(RELEASE, "withdraw", [
        *complete_claim(0, 1, 2),
        *emit(TOPIC["Released(address,uint256)"], [arg(0, True), arg(1)]),
    ])
    return Fixture("minimal", [src], [dst], [pairing(ev, RELEASE)])


def fixture_slow(diamonds: int = 40) -> Fixture:
    """Many independent branches, each guarding a store: path enumeration blows up."""
    fix = fixture_minimal()
    fix.name = "slow"
    dst = fix.destination[0]
    body = complete_claim(0, 1, 2)
    for k in range(diamonds):
        skip = fresh("skip")
        body += arg(1) + [f"PUSH {k + 1}", "AND", f"PUSH :{skip}", "JUMPI"]
        body += sstore(["PUSH 0x10"], ["PUSH 1"]) + [f"{skip}:"]
    dst.bodies = [(lab, s, b) for lab, s, b in dst.bodies if s != sel(RELEASE)]
    dst.abi = [a for a in dst.abi if a["selector"] != f"{sel(RELEASE):#010x}"]
    dst.function(RELEASE, "withdraw", body)
    fix.config = {"max_path_depth": 4096}
    return fix


def two_function_contract() -> bytes:
    """ping() and pong() with disjoint bodies and a shared helper."""
    c = Contract("PingPong", addr(0x22))
    c.function("ping()", "other", [*sstore(["PUSH 0"], ["PUSH 1"]), *call_internal("helper", [])])
    c.function("pong()", "other", [*sstore(["PUSH 1"], ["PUSH 2"]), *call_internal("helper", [])])
    c.helper("helper", "_helper", ["PUSH 7", "PUSH 3", "SSTORE", "JUMP"])
    return c.build()[0]


ALL = {
    "fixture_a": fixture_a,
    "fixture_a_patched": lambda: fixture_a(patched=True),
    "fixture_b": fixture_b,
    "fixture_b_event_type": lambda: fixture_b(type_from_event=True),
    "fixture_c": fixture_c,
    "fixture_d": fixture_d,
    "case_study": fixture_case_study,
    "two_deposits": fixture_two_deposits,
    "minimal": fixture_minimal,
}


def write_all(outdir: str | Path) -> list[Path]:
    return [builder().write(outdir) for builder in ALL.values()]


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    if len(argv) != 1:
        sys.stderr.write("usage: python -m axe.fixtures OUTDIR\n")
        return 2
    for p in write_all(argv[0]):
        print(p)
    return 0


if __name__ == "__main__":
    sys.exit(main())
