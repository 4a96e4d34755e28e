"""Bridge manifest loading and binding of ingested contracts to chain roles."""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from axe.errors import BindError, ManifestError, RoleError
from axe.evm.cfg import ContractCfg, FunctionBody, recover_cfg
from axe.evm.disasm import disassemble, parse_hex
from axe.evm.functions import partition_functions

log = logging.getLogger(__name__)

KINDS = ("deposit", "withdraw", "authorize", "other")
MEANINGS = ("balance", "authorization", "recordList", "liquidity", "support", "other")
ROLES = ("source", "destination")
CONFIG_KEYS = ("assoc_threshold", "max_path_depth", "loop_unroll", "timeout_secs")

_HEX = {
    4: re.compile(r"^0x[0-9a-fA-F]{8}$"),
    20: re.compile(r"^0x[0-9a-fA-F]{40}$"),
    32: re.compile(r"^0x[0-9a-fA-F]{64}$"),
}


@dataclass(frozen=True)
class AbiHint:
    selector: str
    name: str
    kind: str = "other"


@dataclass(frozen=True)
class EventHint:
    topic0: str
    name: str
    kind: str = "other"


@dataclass(frozen=True)
class StorageHint:
    slot: int
    meaning: str
    name: str = ""


@dataclass(frozen=True)
class InternalHint:
    entry: int
    name: str


@dataclass(frozen=True)
class ContractEntry:
    address: str
    bytecode: str = ""
    code: str = ""
    abi: tuple[AbiHint, ...] = ()
    events: tuple[EventHint, ...] = ()
    storage: tuple[StorageHint, ...] = ()
    functions: tuple[InternalHint, ...] = ()
    name: str = ""

    def abi_by_selector(self) -> dict[str, AbiHint]:
        return {a.selector: a for a in self.abi}

    def event_by_topic(self) -> dict[int, EventHint]:
        return {int(e.topic0, 16): e for e in self.events}

    def meaning_of(self, slot: int | None) -> str | None:
        for s in self.storage:
            if s.slot == slot:
                return s.meaning
        return None

    def storage_hint(self, slot: int | None) -> StorageHint | None:
        for s in self.storage:
            if s.slot == slot:
                return s
        return None


@dataclass(frozen=True)
class ChainEntry:
    chain_id: int
    role: str
    contracts: tuple[ContractEntry, ...]


@dataclass(frozen=True)
class Pairing:
    deposit_event: str
    authorize_selector: str
    # (event argument index, authorize parameter index); None means the relayer passes every argument
    arg_map: tuple[tuple[int, int], ...] | None = None


@dataclass(frozen=True)
class BridgeDescriptor:
    name: str
    chains: tuple[ChainEntry, ...]
    pairings: tuple[Pairing, ...]
    config: tuple[tuple[str, float], ...] = ()
    base_dir: str = "."

    def chain(self, role: str) -> ChainEntry:
        return next(c for c in self.chains if c.role == role)

    def contracts(self):
        """``(role, chain_id, entry)`` for every declared contract, in manifest order."""
        for chain in self.chains:
            for entry in chain.contracts:
                yield chain.role, chain.chain_id, entry


def _require(obj: dict, key: str, path: str):
    if not isinstance(obj, dict):
        raise ManifestError("expected a mapping", path)
    if key not in obj:
        raise ManifestError(f"missing required field '{key}'", path)
    return obj[key]


def _hex(value, width: int, path: str) -> str:
    if not isinstance(value, str) or not _HEX[width].match(value):
        raise ManifestError(f"expected {width}-byte hex string, got {value!r}", path)
    return value.lower()


def _enum(value, allowed, path: str) -> str:
    if value not in allowed:
        raise ManifestError(f"expected one of {', '.join(allowed)}, got {value!r}", path)
    return value


def _list(obj: dict, key: str, path: str) -> list:
    value = obj.get(key, []) if isinstance(obj, dict) else []
    if value is None:
        return []
    if not isinstance(value, list):
        raise ManifestError("expected a list", f"{path}.{key}")
    return value


def _contract(doc: dict, path: str) -> ContractEntry:
    address = _hex(_require(doc, "address", path), 20, f"{path}.address")
    bytecode = doc.get("bytecode", "")
    code = doc.get("code", "")
    if not bytecode and not code:
        raise ManifestError("missing required field 'bytecode'", path)
    abi = []
    for i, a in enumerate(_list(doc, "abi", path)):
        p = f"{path}.abi[{i}]"
        abi.append(AbiHint(
            _hex(_require(a, "selector", p), 4, f"{p}.selector"),
            str(a.get("name", "")),
            _enum(a.get("kind", "other"), KINDS, f"{p}.kind"),
        ))
    events = []
    for i, e in enumerate(_list(doc, "events", path)):
        p = f"{path}.events[{i}]"
        events.append(EventHint(
            _hex(_require(e, "topic0", p), 32, f"{p}.topic0"),
            str(e.get("name", "")),
            _enum(e.get("kind", "other"), KINDS, f"{p}.kind"),
        ))
    storage = []
    for i, s in enumerate(_list(doc, "storage", path)):
        p = f"{path}.storage[{i}]"
        slot = _require(s, "slot", p)
        if not isinstance(slot, int) or isinstance(slot, bool) or slot < 0:
            raise ManifestError(f"slot must be a non-negative integer, got {slot!r}", f"{p}.slot")
        storage.append(StorageHint(
            slot, _enum(_require(s, "meaning", p), MEANINGS, f"{p}.meaning"), str(s.get("name", ""))
        ))
    functions = []
    for i, f in enumerate(_list(doc, "functions", path)):
        p = f"{path}.functions[{i}]"
        entry = _require(f, "entry", p)
        if isinstance(entry, str):
            try:
                entry = int(entry, 0)
            except ValueError:
                raise ManifestError(f"bad entry offset {entry!r}", f"{p}.entry") from None
        if not isinstance(entry, int) or entry < 0:
            raise ManifestError(f"bad entry offset {entry!r}", f"{p}.entry")
        functions.append(InternalHint(entry, str(_require(f, "name", p))))
    return ContractEntry(
        address=address,
        bytecode=str(bytecode),
        code=str(code),
        abi=tuple(abi),
        events=tuple(events),
        storage=tuple(storage),
        functions=tuple(functions),
        name=str(doc.get("name", "")),
    )


def load_manifest(document: str, base_dir: str | Path = ".") -> BridgeDescriptor:
    """Parse and validate a manifest (YAML or JSON text)."""
    try:
        doc = yaml.safe_load(document)
    except yaml.YAMLError as exc:
        raise ManifestError(f"unparseable manifest: {exc}") from None
    bridge = _require(doc, "bridge", "$")
    path = "bridge"
    name = str(_require(bridge, "name", path))
    chains = []
    for i, c in enumerate(_require(bridge, "chains", path) or []):
        p = f"{path}.chains[{i}]"
        chain_id = _require(c, "chain_id", p)
        if not isinstance(chain_id, int) or isinstance(chain_id, bool):
            raise ManifestError(f"chain_id must be an integer, got {chain_id!r}", f"{p}.chain_id")
        role = _enum(_require(c, "role", p), ROLES, f"{p}.role")
        contracts = tuple(_contract(x, f"{p}.contracts[{j}]") for j, x in enumerate(_list(c, "contracts", p)))
        chains.append(ChainEntry(chain_id, role, contracts))

    seen: dict[str, str] = {}
    for i, c in enumerate(chains):
        for j, k in enumerate(c.contracts):
            if k.address in seen:
                raise ManifestError(
                    f"address {k.address} declared twice (also at {seen[k.address]})",
                    f"{path}.chains[{i}].contracts[{j}].address",
                )
            seen[k.address] = f"{path}.chains[{i}].contracts[{j}]"

    roles = [c.role for c in chains]
    for role in ROLES:
        if roles.count(role) != 1:
            raise RoleError(f"expected exactly one {role} chain, found {roles.count(role)}", f"{path}.chains")

    src_events = {e.topic0 for c in chains if c.role == "source" for k in c.contracts for e in k.events}
    dst_selectors = {a.selector for c in chains if c.role == "destination" for k in c.contracts for a in k.abi}
    pairings = []
    for i, pr in enumerate(_list(bridge, "pairings", path)):
        p = f"{path}.pairings[{i}]"
        event = _hex(_require(pr, "deposit_event", p), 32, f"{p}.deposit_event")
        selector = _hex(_require(pr, "authorize_selector", p), 4, f"{p}.authorize_selector")
        if event not in src_events:
            raise ManifestError("deposit_event is not declared on a source-chain contract", f"{p}.deposit_event")
        if selector not in dst_selectors:
            raise ManifestError(
                "authorize_selector is not declared on a destination-chain contract", f"{p}.authorize_selector"
            )
        arg_map = None
        if "arg_map" in pr:
            arg_map = []
            for j, m in enumerate(pr["arg_map"] or []):
                q = f"{p}.arg_map[{j}]"
                ev, param = _require(m, "event_arg", q), _require(m, "param", q)
                if not all(isinstance(v, int) and v >= 0 for v in (ev, param)):
                    raise ManifestError("arg_map entries must be non-negative integers", q)
                arg_map.append((ev, param))
            arg_map = tuple(arg_map)
        pairings.append(Pairing(event, selector, arg_map))

    config = {}
    raw_cfg = bridge.get("config") or {}
    if not isinstance(raw_cfg, dict):
        raise ManifestError("expected a mapping", f"{path}.config")
    for key, value in raw_cfg.items():
        if key not in CONFIG_KEYS:
            raise ManifestError(f"unknown config key {key!r}", f"{path}.config")
        if not isinstance(value, (int, float)) or isinstance(value, bool):
            raise ManifestError("config values must be numeric", f"{path}.config.{key}")
        config[key] = value

    return BridgeDescriptor(
        name=name,
        chains=tuple(chains),
        pairings=tuple(pairings),
        config=tuple(sorted(config.items())),
        base_dir=str(base_dir),
    )


def load_manifest_file(path: str | Path) -> BridgeDescriptor:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ManifestError(f"cannot read manifest: {exc.strerror}", str(path)) from None
    return load_manifest(text, path.parent)


# -- binding ---------------------------------------------------------------


@dataclass(frozen=True)
class EmissionSite:
    address: str
    site: int
    block: int
    topic: str
    name: str
    kind: str
    # definition sites of each event argument: indexed topics first, then data words
    args: tuple[frozenset[int], ...] = ()


@dataclass
class ContractProgram:
    entry: ContractEntry
    role: str
    chain_id: int
    cfg: ContractCfg
    emissions: tuple[EmissionSite, ...] = ()
    internal_names: dict[int, str] = field(default_factory=dict)

    @property
    def address(self) -> str:
        return self.entry.address

    @property
    def label(self) -> str:
        return self.entry.name or self.entry.address

    def function_name(self, selector: str) -> str:
        fn = self.cfg.functions.get(selector)
        if fn is not None and fn.name:
            return fn.name
        return selector

    def internal_name(self, entry: int) -> str:
        return self.internal_names.get(entry) or f"internal@{entry:#x}"

    def kind_of(self, selector: str) -> str:
        hint = self.entry.abi_by_selector().get(selector)
        return hint.kind if hint else "other"

    def functions_containing(self, block: int) -> list[FunctionBody]:
        return [f for _, f in sorted(self.cfg.functions.items()) if block in f.blocks]


@dataclass
class BridgeProgram:
    descriptor: BridgeDescriptor
    programs: dict[str, ContractProgram]
    source_entry_points: tuple[tuple[str, FunctionBody], ...]
    dest_entry_points: tuple[tuple[str, FunctionBody], ...]
    warnings: tuple[str, ...] = ()

    def contracts(self, role: str | None = None) -> list[ContractProgram]:
        return [p for _, p in sorted(self.programs.items()) if role is None or p.role == role]

    def find_selector(self, selector: str, role: str | None = None):
        for prog in self.contracts(role):
            fn = prog.cfg.functions.get(selector)
            if fn is not None:
                return prog, fn
        return None


def read_bytecode(descriptor: BridgeDescriptor, entry: ContractEntry) -> bytes:
    if entry.code:
        return parse_hex(entry.code)
    path = Path(entry.bytecode)
    if not path.is_absolute():
        path = Path(descriptor.base_dir) / path
    try:
        return parse_hex(path.read_text())
    except OSError as exc:
        raise BindError(f"cannot read bytecode for {entry.address}: {exc.strerror} ({path})") from None


def ingest(descriptor: BridgeDescriptor) -> dict[str, ContractCfg]:
    """Disassemble and recover the CFG of every declared contract."""
    out = {}
    for _, _, entry in descriptor.contracts():
        code = read_bytecode(descriptor, entry)
        cfg = recover_cfg(disassemble(code, strip_trailer=True))
        out[entry.address] = partition_functions(cfg, [a.selector for a in entry.abi])
    return out


def _event_args(cfg: ContractCfg, site: int, n_topics: int) -> tuple[frozenset[int], ...]:
    facts = cfg.facts
    args = [facts.operand_defs(site, 2 + i) for i in range(1, n_topics)]
    offset, size = facts.operand_const(site, 0), facts.operand_const(site, 1)
    reads = facts.mem_reads.get(site, {})
    if offset is not None and size is not None:
        for word in range(offset, offset + size, 32):
            args.append(reads.get(word, frozenset()))
    return tuple(args)


def locate_emissions(cfg: ContractCfg, entry: ContractEntry) -> tuple[EmissionSite, ...]:
    """LOG1..LOG4 sites whose topic0 is a hinted 32-byte constant pushed in the same block."""
    hints = entry.event_by_topic()
    out = []
    for ins in cfg.sites(opcodes={"LOG1", "LOG2", "LOG3", "LOG4"}):
        block = cfg.blocks[cfg.block_of(ins.offset)]
        span = block.offsets()
        topic_defs = cfg.facts.operand_defs(ins.offset, 2)
        pushed = [cfg.instruction(d) for d in topic_defs if d in span]
        if len(pushed) != 1 or len(topic_defs) != 1 or pushed[0].opcode != "PUSH32":
            continue
        hint = hints.get(pushed[0].value)
        if hint is None:
            continue
        n_topics = int(ins.opcode[3:])
        out.append(EmissionSite(
            entry.address, ins.offset, block.id, hint.topic0, hint.name, hint.kind,
            _event_args(cfg, ins.offset, n_topics),
        ))
    return tuple(out)


def bind(descriptor: BridgeDescriptor, ingested: dict[str, ContractCfg]) -> BridgeProgram:
    programs: dict[str, ContractProgram] = {}
    warnings: list[str] = []
    for role, chain_id, entry in descriptor.contracts():
        cfg = ingested.get(entry.address)
        if cfg is None:
            raise BindError(f"no bytecode ingested for contract {entry.address}")
        abi = entry.abi_by_selector()
        for sel, fn in cfg.functions.items():
            if sel in abi:
                fn.name = abi[sel].name
        names = {}
        for hint in entry.functions:
            if hint.entry in cfg.internal:
                cfg.internal[hint.entry].name = hint.name
                names[hint.entry] = hint.name
            else:
                msg = f"{entry.address}: internal function hint {hint.name} at {hint.entry:#x} is not a call target"
                log.warning(msg)
                warnings.append(msg)
        warnings.extend(f"{entry.address}: {d}" for d in cfg.diagnostics)
        programs[entry.address] = ContractProgram(
            entry, role, chain_id, cfg, locate_emissions(cfg, entry), names
        )

    for pairing in descriptor.pairings:
        found = any(
            e.topic == pairing.deposit_event for p in programs.values() if p.role == "source" for e in p.emissions
        )
        if not found:
            msg = f"deposit event {pairing.deposit_event[:10]}... has no locatable emission site; emitting edge omitted"
            log.warning(msg)
            warnings.append(msg)
        if not any(
            pairing.authorize_selector in p.cfg.functions for p in programs.values() if p.role == "destination"
        ):
            msg = f"authorize selector {pairing.authorize_selector} not found in any destination dispatcher"
            log.warning(msg)
            warnings.append(msg)

    def entries(role):
        return tuple(
            (addr, fn)
            for addr, prog in sorted(programs.items())
            if prog.role == role
            for _, fn in sorted(prog.cfg.functions.items())
            if fn.is_public
        )

    return BridgeProgram(
        descriptor, programs, entries("source"), entries("destination"), tuple(dict.fromkeys(warnings))
    )
