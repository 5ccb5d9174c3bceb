"""Synthetic catalog/user/event generation with planted, auditable structure.

Every user gets one or two home communities plus preferred topics inside
them; at least 90% of their like/view events land on home-community items.
A configurable fraction of items stays cold (zero events of any kind) and
a fraction ships with empty descriptions, which gives the content and
collaborative models complementary blind spots to evaluate against.

Exact cold-item counts need enough event budget to give every warm item at
least one event: n_events >= n_users + warm item count.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from datetime import date

from .catalog import (
    ActivityEvent,
    Community,
    ConfigError,
    Dataset,
    EventKind,
    Item,
    MaterialType,
    PreferenceFilter,
    UserProfile,
)
from .cbf import tokenize
from .notify import DeliverySchedule, Frequency

GENERIC_WORDS = [
    "study", "analysis", "field", "data", "result", "method", "growth",
    "production", "management", "development", "assessment", "report",
    "survey", "trial", "evaluation", "approach", "region", "farm",
    "farmer", "crop", "season", "soil", "water", "climate", "technology",
    "practice", "system", "quality",
]

# three six-word topics per community; topic words drive within-community taste
COMMUNITY_TOPICS: dict[Community, list[list[str]]] = {
    Community.BANANA: [
        ["plantation", "bunch", "ripening", "peel", "export", "cavendish"],
        ["sigatoka", "fungicide", "wilt", "nematode", "quarantine", "spraying"],
        ["pseudostem", "sucker", "propagation", "tissue", "culture", "clone"],
    ],
    Community.CACAO: [
        ["fermentation", "bean", "pod", "chocolate", "drying", "flavor"],
        ["grafting", "rootstock", "nursery", "shade", "pruning", "canopy"],
        ["mirid", "blackpod", "witchbroom", "borer", "infestation", "sanitation"],
    ],
    Community.COCONUT: [
        ["copra", "husk", "shell", "oil", "milling", "desiccated"],
        ["palm", "inflorescence", "toddy", "sap", "sugar", "tapping"],
        ["scale", "beetle", "leaflet", "replanting", "hybrid", "dwarf"],
    ],
    Community.COFFEE: [
        ["roasting", "arabica", "robusta", "cherry", "pulping", "aroma"],
        ["altitude", "shading", "intercropping", "mulching", "terracing", "cooperative"],
        ["berry", "borer", "rust", "defoliation", "resistance", "screening"],
    ],
    Community.CORN: [
        ["maize", "silage", "kernel", "hybridization", "detasseling", "pollination"],
        ["armyworm", "stemborer", "earworm", "scouting", "refuge", "trap"],
        ["feed", "starch", "ethanol", "drying", "storage", "aflatoxin"],
    ],
    Community.RICE: [
        ["paddy", "irrigation", "lowland", "transplanting", "seedling", "panicle"],
        ["grain", "milling", "bran", "cultivar", "tillering", "threshing"],
        ["blast", "tungro", "weevil", "herbicide", "flooding", "drought"],
    ],
    Community.SOYBEAN: [
        ["legume", "nodulation", "inoculant", "nitrogen", "rotation", "fixation"],
        ["protein", "meal", "oilseed", "crushing", "tofu", "tempeh"],
        ["rust", "aphid", "defoliator", "lodging", "maturity", "shattering"],
    ],
    Community.SUGARCANE: [
        ["ratoon", "stalk", "brix", "crushing", "molasses", "bagasse"],
        ["billet", "setts", "furrow", "earthing", "trash", "burning"],
        ["smut", "borers", "grassy", "shoot", "rogueing", "resistant"],
    ],
    Community.TOMATO: [
        ["greenhouse", "trellis", "staking", "seedbed", "transplants", "determinate"],
        ["blight", "wilt", "whitefly", "hornworm", "mosaic", "fruitworm"],
        ["lycopene", "grading", "packing", "ripeness", "firmness", "shelflife"],
    ],
    Community.OTHER: [
        ["bulletin", "policy", "extension", "announcement", "training", "workshop"],
        ["library", "archive", "catalogue", "digitization", "metadata", "indexing"],
        ["economics", "market", "price", "supply", "demand", "trade"],
    ],
}

FIRST_NAMES = [
    "Alex", "Bea", "Carlo", "Dana", "Eli", "Fay", "Gio", "Hana", "Ivan",
    "Jun", "Kira", "Luis", "Mara", "Nilo", "Odette", "Paz", "Quin",
    "Rosa", "Sam", "Tala",
]
LAST_NAMES = [
    "Reyes", "Santos", "Cruz", "Bautista", "Garcia", "Mendoza", "Torres",
    "Flores", "Ramos", "Castillo", "Villanueva", "Domingo", "Aquino",
    "Navarro", "Salazar", "Aguilar", "Mercado", "Roque", "Velasco", "Lim",
]

DAY_SECONDS = 86400
DEFAULT_START_TIME = 1_600_000_000
HOME_SHARE = 0.9  # minimum share of like/view events on home communities
TOPIC_SHARE = 0.75


@dataclass(frozen=True)
class SynthConfig:
    n_users: int = 50
    n_items: int = 200
    n_events: int = 2000
    cold_item_fraction: float = 0.1
    empty_description_fraction: float = 0.1
    start_time: int = DEFAULT_START_TIME
    horizon_days: int = 90

    def validate(self) -> None:
        if self.n_users < 2:
            raise ConfigError("n_users must be >= 2")
        if self.n_items < 10:
            raise ConfigError("n_items must be >= 10")
        if self.n_events < self.n_users:
            raise ConfigError("n_events must be >= n_users")
        for name, frac in (
            ("cold_item_fraction", self.cold_item_fraction),
            ("empty_description_fraction", self.empty_description_fraction),
        ):
            if not 0.0 <= frac < 1.0:
                raise ConfigError(f"{name} must lie in [0, 1)")
        if self.start_time <= 0 or self.horizon_days < 1:
            raise ConfigError("start_time must be positive and horizon_days >= 1")


def _make_items(cfg: SynthConfig, rng: random.Random) -> tuple[list[Item], list[int]]:
    communities = list(Community)
    materials = list(MaterialType)
    empty_desc = set(rng.sample(range(cfg.n_items), int(cfg.empty_description_fraction * cfg.n_items)))
    items = []
    topics = []
    for idx in range(cfg.n_items):
        primary = rng.choice(communities)
        comms = {primary}
        if rng.random() < 0.3:
            comms.add(rng.choice(communities))
        topic = rng.randrange(3)
        topics.append(topic)
        title_words = rng.sample(GENERIC_WORDS, rng.randint(2, 4))
        if rng.random() < 0.3:
            title_words.append(rng.choice(COMMUNITY_TOPICS[primary][topic]))
        title = " ".join(title_words)
        if idx in empty_desc:
            description = ""
        else:
            n_words = rng.randint(12, 24)
            words = []
            for _ in range(n_words):
                roll = rng.random()
                if roll < 0.55:
                    words.append(rng.choice(COMMUNITY_TOPICS[primary][topic]))
                elif roll < 0.75:
                    other_topic = rng.randrange(3)
                    words.append(rng.choice(COMMUNITY_TOPICS[primary][other_topic]))
                else:
                    words.append(rng.choice(GENERIC_WORDS))
            description = " ".join(words)
        pub = date(rng.randint(2015, 2021), rng.randint(1, 12), rng.randint(1, 28))
        items.append(
            Item(
                id=f"item-{idx:04d}",
                title=title,
                description=description,
                material_type=rng.choice(materials),
                communities=frozenset(comms),
                publication_date=pub,
            )
        )
    return items, topics


def _make_users(cfg: SynthConfig, rng: random.Random) -> tuple[list[UserProfile], list[frozenset[Community]], list[dict]]:
    communities = list(Community)
    users = []
    homes = []
    tastes = []
    for idx in range(cfg.n_users):
        home = {rng.choice(communities)}
        if rng.random() < 0.4:
            home.add(rng.choice(communities))
        first = rng.choice(FIRST_NAMES)
        last = rng.choice(LAST_NAMES)
        enabled = idx % 3 == 0
        schedule = DeliverySchedule(
            enabled=enabled,
            frequency=Frequency.WEEKLY if idx % 2 == 0 else Frequency.DAILY,
            weekday="mon" if idx % 2 == 0 else None,
            time_of_day="08:00",
            utc_offset_minutes=0,
        )
        users.append(
            UserProfile(
                id=f"user-{idx:04d}",
                full_name=f"{first} {last}",
                email=f"user{idx:04d}@example.org",
                preferences=PreferenceFilter(),
                schedule=schedule,
            )
        )
        homes.append(frozenset(home))
        # iterate communities in value order: set order would tie the rng
        # stream to per-process enum identity hashes
        tastes.append(
            {
                c: frozenset(rng.sample(range(3), rng.randint(1, 2)))
                for c in sorted(home, key=lambda c: c.value)
            }
        )
    return users, homes, tastes


def generate_synthetic(cfg: SynthConfig, seed: int) -> Dataset:
    """Deterministic dataset with planted community/topic structure."""
    cfg.validate()
    rng = random.Random(seed)
    items, item_topics = _make_items(cfg, rng)
    users, homes, tastes = _make_users(cfg, rng)

    cold = set(rng.sample(range(cfg.n_items), int(cfg.cold_item_fraction * cfg.n_items)))
    warm = [i for i in range(cfg.n_items) if i not in cold]

    by_community: dict[Community, list[int]] = {c: [] for c in Community}
    for idx in warm:
        for c in items[idx].communities:
            by_community[c].append(idx)
    home_pool = [sorted({i for c in homes[u] for i in by_community[c]}) for u in range(cfg.n_users)]
    taste_pool = []
    for u in range(cfg.n_users):
        pool = [
            i
            for i in home_pool[u]
            if any(c in tastes[u] and item_topics[i] in tastes[u][c] for c in items[i].communities)
        ]
        taste_pool.append(pool or home_pool[u])

    # mild popularity skew inside each community so groups co-consume hot items
    heat = [0.0] * cfg.n_items
    for c in Community:
        order = by_community[c][:]
        rng.shuffle(order)
        for pos, idx in enumerate(order):
            heat[idx] = max(heat[idx], 1.0 / (1.0 + 0.5 * pos))

    def pick(pool: list[int]) -> int:
        return rng.choices(pool, weights=[heat[i] for i in pool])[0]

    lv_total = [0] * cfg.n_users
    lv_off = [0] * cfg.n_users
    covered = [False] * cfg.n_items
    raw: list[tuple[int, int, EventKind, str | None]] = []  # (user, item, kind, query)

    def query_for(item_idx: int) -> str:
        tokens = tokenize(items[item_idx].title + " " + items[item_idx].description)
        picked = rng.sample(tokens, min(len(tokens), rng.randint(1, 3)))
        return " ".join(picked) or "library"

    def add(user_idx: int, item_idx: int, kind: EventKind) -> None:
        query = query_for(item_idx) if kind is EventKind.SEARCH else None
        raw.append((user_idx, item_idx, kind, query))
        covered[item_idx] = True
        if kind in (EventKind.LIKE, EventKind.VIEW):
            lv_total[user_idx] += 1
            if not (homes[user_idx] & items[item_idx].communities):
                lv_off[user_idx] += 1

    nontaste_pool = [sorted(set(home_pool[u]) - set(taste_pool[u])) for u in range(cfg.n_users)]
    engaged: list[list[int]] = [[] for _ in range(cfg.n_users)]

    def add_lv(user_idx: int, item_idx: int, kind: EventKind) -> None:
        if item_idx not in engaged[user_idx]:
            engaged[user_idx].append(item_idx)
        add(user_idx, item_idx, kind)

    # phase A: every user opens with a like on a taste item
    for u in range(cfg.n_users):
        if home_pool[u]:
            add_lv(u, pick(taste_pool[u]), EventKind.LIKE)
        else:
            add(u, rng.choice(warm), EventKind.SEARCH)

    # phase B: give every still-cold warm item one event while budget lasts
    compatible = {
        i: [u for u in range(cfg.n_users) if homes[u] & items[i].communities] for i in warm
    }
    for i in warm:
        if covered[i] or len(raw) >= cfg.n_events:
            continue
        candidates = compatible[i]
        if candidates:
            add(rng.choice(candidates), i, rng.choice([EventKind.LIKE, EventKind.VIEW]))
        else:
            add(rng.randrange(cfg.n_users), i, EventKind.SEARCH)

    # phase C: fill the remaining budget with taste-driven activity. Likes
    # mark taste items; views either deepen engagement on an already-engaged
    # item or explore home items off the user's taste.
    while len(raw) < cfg.n_events:
        u = rng.randrange(cfg.n_users)
        if not home_pool[u]:
            # keep the 90% home-share guarantee vacuous: search traffic only
            add(u, rng.choice(warm), EventKind.SEARCH)
            continue
        roll = rng.random()
        kind = EventKind.LIKE if roll < 0.45 else EventKind.VIEW if roll < 0.9 else EventKind.SEARCH
        go_off = rng.random() < (1.0 - HOME_SHARE) and (
            kind is EventKind.SEARCH or 10 * (lv_off[u] + 1) <= lv_total[u] + 1
        )
        if go_off:
            add_lv(u, rng.choice(warm), kind) if kind is not EventKind.SEARCH else add(u, rng.choice(warm), kind)
            continue
        if kind is EventKind.SEARCH:
            add(u, pick(home_pool[u]), kind)
        elif kind is EventKind.LIKE:
            add_lv(u, pick(taste_pool[u]), kind)
        else:
            r = rng.random()
            if r < 0.5 and engaged[u]:
                add_lv(u, rng.choice(engaged[u]), kind)
            elif r < 0.8 and nontaste_pool[u]:
                add_lv(u, pick(nontaste_pool[u]), kind)
            else:
                add_lv(u, pick(taste_pool[u]), kind)

    horizon = cfg.horizon_days * DAY_SECONDS
    stamped = [
        ActivityEvent(
            user_id=users[u].id,
            item_id=items[i].id,
            kind=kind,
            timestamp=cfg.start_time + rng.randrange(horizon),
            query=query,
        )
        for (u, i, kind, query) in raw
    ]
    stamped.sort(key=lambda e: (e.timestamp, e.user_id, e.item_id, e.kind.value))
    return Dataset(items=items, users=users, events=stamped)
