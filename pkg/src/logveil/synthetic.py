"""Grammar-generated synthetic log corpora with labels known by construction.

A *dialect* is a small log grammar: its own filler vocabulary, id prefixes,
configuration keys, host naming, and phrasing for username mentions.  The
family generator hands out disjoint vocabulary slices, so a model trained on
fourteen dialects genuinely has to adapt to the fifteenth - which is what the
fine-tuning experiments measure.  Because the generator assigns every label
itself, it doubles as the ground-truth oracle for tagger evaluation.
"""
from __future__ import annotations

import random
from dataclasses import dataclass
from pathlib import Path
from .corpus import Dataset, save_annotated
from .model import (
    AnnotatedLine,
    AttributeKind,
    IobLabel,
    LogLine,
    NetSubKind,
    OUTSIDE,
    SubParts,
    Token,
    begin,
    inside,
)

_VERBS = [
    "starting", "stopping", "received", "deleting", "scheduling", "flushing",
    "registered", "resolving", "queued", "syncing", "committing", "rolling",
    "probing", "mounting", "linking", "compacting", "awaiting", "spawning",
    "reaping", "throttling", "verifying", "allocating", "releasing", "scanning",
    "draining", "pausing", "resuming", "expiring", "renewing", "pinning",
    "evicting", "warming", "sealing", "opening", "closing", "rotating",
    "archiving", "restoring", "migrating", "replaying", "acking", "batching",
    "merging", "splitting", "shipping", "staging", "tracking", "marking",
    "skipping", "retrying", "accepting", "refusing", "holding", "freeing",
    "adopting", "parking", "waking", "fencing", "cloning", "pruning",
]
_NOUNS = [
    "datanode", "scheduler", "cache", "journal", "replica", "session",
    "worker", "broker", "shard", "lease", "segment", "bundle", "router",
    "daemon", "monitor", "agent", "queue", "index", "snapshot", "volume",
    "ledger", "mapper", "reducer", "fetcher", "cursor", "planner", "executor",
    "resolver", "listener", "pipeline", "registry", "manifest", "allocator",
    "balancer", "reactor", "poller", "gateway", "spooler", "tracker", "vault",
    "beacon", "channel", "cluster", "socket", "handle", "bucket", "stream",
    "mirror", "anchor", "relay", "sentinel", "courier", "drawer", "hopper",
    "kernel", "loader", "notary", "oracle", "porter", "quorum",
]
_ID_PREFIXES = [
    "blk_", "task_", "job-", "req-", "txn_", "span-", "trace_", "cid-",
    "obj_", "chunk-", "seg_", "unit-", "proc_", "ref-", "evt_", "msg-",
    "op_", "tkt-", "lot_", "inst-", "vol_", "img-", "key_", "row-", "grp_",
    "fd-", "env_", "app-", "box_", "tmp-",
]
_CONFIG_KEYS = [
    "memory", "vcores", "heapsize", "timeout", "retries", "buffer", "quota",
    "ttl", "batch", "window", "threads", "fds", "limit", "depth", "rate",
    "burst", "cachesize", "keepalive", "backlog", "chunksize", "parallel",
    "weight", "priority", "interval", "capacity", "stride", "blocks",
    "slots", "epochs", "cooldown",
]
_USERNAMES = [
    "webmaster", "admin", "jsmith", "alice", "bob", "carol", "dave", "erin",
    "frank", "grace", "heidi", "ivan", "judy", "mallory", "oscar", "peggy",
    "sybil", "trent", "victor", "wendy", "nagios", "backupd", "deploy",
    "jenkins", "svcacct", "mqadmin", "dbauser", "roota", "operator1", "guest7",
    "sysprobe", "relayman", "curator", "archivist", "watchdog", "dispatch",
    "porter2", "signalr", "custodian", "overseer", "attendant", "registrar",
    "examiner", "verifier", "auditor9",
]
# bare-number id contexts; unique per dialect so cross-dialect transfer
# genuinely requires fine-tuning (the number alone looks like any other count)
_ID_KEYWORDS = [
    "warrant", "docket", "parcel", "crate", "voucher", "badge", "coupon",
    "permit", "stub", "ballot", "chit", "serialno", "batchno", "caseno",
    "tally",
]
_HOSTWORDS = ["node", "app", "db", "proxy", "cache", "mail", "web", "gw",
              "worker", "edge", "core", "store", "auth", "log", "api"]
_ZONES = ["dc1", "dc2", "east", "west", "prod", "dev", "stage", "eu", "us", "lab"]
_TLDS = ["example.com", "internal.net", "corp.local", "cluster.io", "svc.local",
         "example.org", "intra.net", "grid.io", "mesh.local", "lan.net"]
_PATH_DIRS = ["var", "log", "etc", "usr", "data", "opt", "srv", "spool",
              "home", "lib", "state", "cache", "conf", "run", "mnt"]
_PATH_FILES = ["server.log", "app.conf", "workers.properties", "core.dump",
               "settings.xml", "audit.json", "daemon.pid", "access.log",
               "schema.sql", "state.db"]
_MAC_KEYWORDS = ["bssid", "hwaddr", "lladdr"]
# username phrasings; {U} is the name, {N} inserts a net attribute.
# One style per dialect: recognizing the mention requires the phrasing.
_USER_STYLES = [
    ("Invalid user {U} from {N}", False),
    ("account {U} authenticated", False),
    ("login {U} rejected", False),
    ("session opened for {U}", False),
    ("operator {U} granted access", False),
    ("identity {U} verified", False),
    ("credentials for {U} expired", False),
    ("owner {U} acknowledged", False),
    ("handle {U} mapped", False),
    ("profile {U} suspended", False),
    ("caller {U} admitted", False),
    ("principal {U} assumed role", False),
    ("tenant {U} quota reached", False),
    ("member {U} joined pool", False),
    ("actor {U} completed review", False),
]


@dataclass(frozen=True)
class Dialect:
    """One synthetic log grammar with its private vocabulary slices."""

    index: int
    name: str
    verbs: tuple[str, ...]
    nouns: tuple[str, ...]
    id_prefixes: tuple[str, ...]
    id_hex: bool
    config_keys: tuple[str, ...]
    zone: str
    tld: str
    mac_keyword: str
    user_style: tuple[str, bool]
    id_keyword: str
    usernames: tuple[str, ...]


def family_dialects(n: int = 15, seed: int = 7) -> list[Dialect]:
    """Deterministic dialect family with pairwise-disjoint vocabulary."""
    if n > 15:
        raise ValueError("vocabulary pools support at most 15 dialects")
    rng = random.Random(seed)
    verbs = _VERBS[:]
    nouns = _NOUNS[:]
    prefixes = _ID_PREFIXES[:]
    keys = _CONFIG_KEYS[:]
    for pool in (verbs, nouns, prefixes, keys):
        rng.shuffle(pool)
    dialects = []
    for d in range(n):
        dialects.append(
            Dialect(
                index=d,
                name=f"dialect{d:02d}",
                verbs=tuple(verbs[d * 4 : d * 4 + 4]),
                nouns=tuple(nouns[d * 4 : d * 4 + 4]),
                id_prefixes=tuple(prefixes[d * 2 : d * 2 + 2]),
                id_hex=d % 3 == 1,
                config_keys=tuple(keys[d * 2 : d * 2 + 2]),
                zone=_ZONES[d % len(_ZONES)],
                tld=_TLDS[(d * 3) % len(_TLDS)],
                mac_keyword=_MAC_KEYWORDS[d % len(_MAC_KEYWORDS)],
                user_style=_USER_STYLES[d % len(_USER_STYLES)],
                id_keyword=_ID_KEYWORDS[d % len(_ID_KEYWORDS)],
                usernames=tuple(_USERNAMES[d * 3 : d * 3 + 3]),
            )
        )
    return dialects


class _LineBuilder:
    def __init__(self) -> None:
        self.texts: list[str] = []
        self.labels: list[IobLabel] = []
        self.subs: list[SubParts | None] = []

    def word(self, text: str) -> None:
        self.texts.append(text)
        self.labels.append(OUTSIDE)
        self.subs.append(None)

    def entity(self, text: str, kind: AttributeKind, sub: SubParts | None = None,
               cont: bool = False) -> None:
        self.texts.append(text)
        self.labels.append(inside(kind) if cont else begin(kind))
        self.subs.append(sub)


def _ip(rng: random.Random) -> str:
    return ".".join(str(rng.randint(1, 254)) for _ in range(4))


def _port(rng: random.Random) -> str:
    return str(rng.choice([rng.randint(80, 999), rng.randint(1000, 65535)]))


def _host(rng: random.Random, d: Dialect) -> str:
    return f"{rng.choice(_HOSTWORDS)}{rng.randint(1, 99):02d}.{d.zone}.{d.tld}"


def _net(rng: random.Random, d: Dialect) -> tuple[str, SubParts]:
    form = rng.randrange(10)
    if form < 3:
        return _ip(rng), (NetSubKind.IP,)
    if form < 6:
        return f"{_ip(rng)}:{_port(rng)}", (NetSubKind.IP, NetSubKind.PORT)
    if form < 8:
        return _host(rng, d), (NetSubKind.HOSTNAME,)
    return f"{_host(rng, d)}:{_port(rng)}", (NetSubKind.HOSTNAME, NetSubKind.PORT)


def _mac(rng: random.Random) -> str:
    return ":".join(f"{rng.randint(0, 255):02x}" for _ in range(6))


def _path(rng: random.Random, d: Dialect) -> str:
    depth = rng.randint(2, 4)
    dirs = [rng.choice(_PATH_DIRS) for _ in range(depth)]
    leaf = rng.choice(_PATH_FILES + list(d.nouns))
    return "/" + "/".join(dirs + [leaf])


def _id_value(rng: random.Random, d: Dialect) -> str:
    prefix = rng.choice(d.id_prefixes)
    if d.id_hex:
        body = "".join(rng.choice("0123456789abcdef") for _ in range(10))
    else:
        body = str(rng.randint(10_000, 10**13))
        if rng.random() < 0.3:
            body = "-" + body
    return prefix + body


def _url(rng: random.Random, d: Dialect) -> str:
    scheme = rng.choice(["http", "https"])
    segs = "/".join(rng.choice(_PATH_DIRS) for _ in range(rng.randint(1, 3)))
    url = f"{scheme}://{_host(rng, d)}/{segs}"
    if rng.random() < 0.4:
        url += f"?id={rng.randint(1, 9999)}"
    return url


def _config(rng: random.Random, d: Dialect) -> str:
    key = rng.choice(d.config_keys)
    sep = rng.choice([":", "="])
    return f"{key}{sep}{rng.randint(1, 65536)}"


def _num(rng: random.Random) -> str:
    return str(rng.randint(0, 99999))


def _render_user(b: _LineBuilder, rng: random.Random, d: Dialect) -> None:
    style, with_net = d.user_style
    for piece in style.split(" "):
        if piece == "{U}":
            b.entity(rng.choice(d.usernames), AttributeKind.USERNAME)
        elif piece == "{N}":
            text, sub = _net(rng, d)
            b.entity(text, AttributeKind.NET, sub)
        else:
            b.word(piece)
    if with_net:
        text, sub = _net(rng, d)
        b.entity(text, AttributeKind.NET, sub)


def _build_line(rng: random.Random, d: Dialect) -> tuple[_LineBuilder, str]:
    """Render one line; returns the builder and a template signature."""
    b = _LineBuilder()
    roll = rng.randrange(100)
    v, n = d.verbs, d.nouns
    if roll < 11:
        tpl = "id-on-net"
        b.word(v[0])
        b.word(n[0])
        b.entity(_id_value(rng, d), AttributeKind.ID)
        b.word("on")
        text, sub = _net(rng, d)
        b.entity(text, AttributeKind.NET, sub)
    elif roll < 20:
        tpl = "net-latency"
        b.word(n[1])
        b.word(v[1])
        b.word("at")
        text, sub = _net(rng, d)
        b.entity(text, AttributeKind.NET, sub)
        b.word("after")
        b.word(_num(rng))
        b.word("ms")
    elif roll < 30:
        tpl = "user"
        _render_user(b, rng, d)
    elif roll < 38:
        tpl = "path"
        b.word(v[2])
        b.entity(_path(rng, d), AttributeKind.FILEPATH)
        b.word(rng.choice(["ok", "done", "failed"]))
    elif roll < 45:
        tpl = "url"
        b.word(v[3])
        b.entity(_url(rng, d), AttributeKind.URL)
        b.word("took")
        b.word(_num(rng))
        b.word("ms")
    elif roll < 51:
        tpl = "mac"
        b.word(d.mac_keyword)
        b.entity(_mac(rng), AttributeKind.MAC)
        b.word("rssi")
        b.word(f"-{rng.randint(20, 90)}")
    elif roll < 58:
        tpl = "config"
        b.word(n[2])
        b.word(v[1])
        b.entity(_config(rng, d), AttributeKind.CONFIG)
        if rng.random() < 0.5:
            b.entity(_config(rng, d), AttributeKind.CONFIG)
    elif roll < 63:
        tpl = "config-pair"
        b.word(n[3])
        b.word(v[3])
        key = rng.choice(d.config_keys)
        b.entity(key, AttributeKind.CONFIG)
        b.entity(str(rng.randint(1, 4096)), AttributeKind.CONFIG, cont=True)
    elif roll < 69:
        tpl = "listen-port"
        b.word(n[0])
        b.word("listening")
        b.word("on")
        b.word("port")
        b.entity(_port(rng), AttributeKind.NET, (NetSubKind.PORT,))
    elif roll < 75:
        tpl = "id-only"
        b.word(v[0])
        b.word("finished")
        b.entity(_id_value(rng, d), AttributeKind.ID)
        b.word("rc")
        b.word(str(rng.randint(0, 3)))
    elif roll < 87:
        tpl = "keyword-id"
        b.word(v[rng.randrange(4)])
        b.word(d.id_keyword)
        b.entity(str(rng.randint(1000, 999999)), AttributeKind.ID)
        if rng.random() < 0.4:
            b.word("closed")
    elif roll < 92:
        tpl = "plain-state"
        b.word(n[rng.randrange(4)])
        b.word("state")
        b.word("changed")
        b.word("to")
        b.word(rng.choice(["idle", "busy", "down", "ready"]))
    elif roll < 97:
        tpl = "plain-retry"
        b.word("retry")
        b.word(_num(rng))
        b.word("scheduled")
        b.word("in")
        b.word(_num(rng))
        b.word("ms")
    else:
        tpl = "plain-heartbeat"
        b.word(n[rng.randrange(4)])
        b.word("heartbeat")
        b.word("ok")
        b.word("uptime")
        b.word(_num(rng))
    return b, f"{d.name}:{tpl}"


def _assemble(
    b: _LineBuilder, dataset_id: str, line_no: int, rng: random.Random
) -> AnnotatedLine:
    parts: list[str] = []
    tokens: list[Token] = []
    pos = 0
    for i, text in enumerate(b.texts):
        if i:
            sep = "  " if rng.random() < 0.04 else " "
            parts.append(sep)
            pos += len(sep)
        parts.append(text)
        tokens.append(Token(text, pos, pos + len(text)))
        pos += len(text)
    raw = "".join(parts)
    line = LogLine(raw, dataset_id, line_no)
    subs = tuple(b.subs) if any(s is not None for s in b.subs) else None
    return AnnotatedLine(line, tuple(tokens), tuple(b.labels), subs)


def generate_dataset(dialect: Dialect, n_lines: int, seed: int) -> Dataset:
    """One dialect's dataset, with per-line template signatures attached."""
    rng = random.Random(f"{seed}:{dialect.index}")
    lines: list[AnnotatedLine] = []
    templates: dict[str, int] = {}
    mapping: list[int] = []
    for i in range(n_lines):
        builder, tpl = _build_line(rng, dialect)
        lines.append(_assemble(builder, dialect.name, i, rng))
        mapping.append(templates.setdefault(tpl, len(templates)))
    return Dataset(dialect.name, tuple(lines), tuple(templates), tuple(mapping))


def family_corpus(
    n_dialects: int = 15, lines_per_dialect: int = 200, seed: int = 7
) -> list[Dataset]:
    """The full dialect family as one dataset per dialect."""
    return [
        generate_dataset(d, lines_per_dialect, seed)
        for d in family_dialects(n_dialects, seed)
    ]


def mixed_corpus(n_lines: int, seed: int = 7, n_dialects: int = 15) -> list[AnnotatedLine]:
    """Lines sampled across the whole family (for single-corpus experiments)."""
    dialects = family_dialects(n_dialects, seed)
    rng = random.Random(seed + 1)
    out: list[AnnotatedLine] = []
    for i in range(n_lines):
        d = dialects[rng.randrange(len(dialects))]
        builder, _ = _build_line(rng, d)
        out.append(_assemble(builder, "mixed", i, rng))
    return out


def write_dataset(ds: Dataset, root: str | Path) -> Path:
    """Write a dataset directory in manifest layout (.log/.ann.tsv/templates)."""
    root = Path(root)
    target = root / ds.id
    target.mkdir(parents=True, exist_ok=True)
    (target / f"{ds.id}.log").write_text(
        "".join(ann.line.raw + "\n" for ann in ds.lines), encoding="latin-1"
    )
    save_annotated(ds, target / f"{ds.id}.ann.tsv")
    if ds.templates is not None:
        (target / f"{ds.id}.templates.txt").write_text(
            "".join(ds.templates[t] + "\n" for t in ds.line_templates),
            encoding="latin-1",
        )
    return target
