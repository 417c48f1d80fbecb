"""Domain types: behaviors, the intensity partition, interactions, catalogs.

Everything here is immutable after construction and safe to share across
concurrent readers.
"""

from __future__ import annotations

from dataclasses import dataclass

EXPLORATION = 0
COMMITMENT = 1


@dataclass(frozen=True)
class Behavior:
    """One entry of the behavior vocabulary (ids dense 0..n-1)."""

    id: int
    name: str


@dataclass(frozen=True)
class BehaviorSchema:
    """Ordered behavior vocabulary plus the two-way intensity partition.

    ``intensity[b.id]`` is 0 for exploration behaviors (views, clicks) and
    1 for commitment behaviors (cart, purchase).  Single-stratum schemas
    are legal but flagged by :func:`validate_schema`.
    """

    behaviors: tuple[Behavior, ...]
    intensity: tuple[int, ...]

    def __post_init__(self):
        ids = [b.id for b in self.behaviors]
        if ids != list(range(len(self.behaviors))):
            raise ValueError(f"behavior ids must be dense 0..n-1, got {ids}")
        names = [b.name for b in self.behaviors]
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate behavior names in {names}")
        if len(self.intensity) != len(self.behaviors):
            raise ValueError("intensity labels must cover every behavior")
        if any(v not in (EXPLORATION, COMMITMENT) for v in self.intensity):
            raise ValueError(f"intensity labels must be 0 or 1, got {self.intensity}")

    @property
    def num_behaviors(self) -> int:
        return len(self.behaviors)

    def id_of(self, name: str) -> int:
        for b in self.behaviors:
            if b.name == name:
                return b.id
        raise KeyError(f"unknown behavior name {name!r}")

    def name_of(self, behavior_id: int) -> str:
        return self.behaviors[behavior_id].name

    def intensity_of(self, behavior_id: int) -> int:
        return self.intensity[behavior_id]

    def with_intensity(self, intensity: tuple[int, ...]) -> "BehaviorSchema":
        return BehaviorSchema(self.behaviors, tuple(intensity))

    def purchase_only_high(self, purchase_name: str = "purchase") -> "BehaviorSchema":
        """Remap the partition so only the purchase behavior is commitment."""
        pid = self.id_of(purchase_name)
        return self.with_intensity(tuple(COMMITMENT if b.id == pid else EXPLORATION for b in self.behaviors))


def make_schema(names: list[str] | tuple[str, ...], high: set[str] | frozenset[str]) -> BehaviorSchema:
    """Build a schema from ordered names and the set of commitment behaviors."""
    behaviors = tuple(Behavior(i, n) for i, n in enumerate(names))
    unknown = set(high) - set(names)
    if unknown:
        raise ValueError(f"commitment behaviors not in vocabulary: {sorted(unknown)}")
    intensity = tuple(COMMITMENT if n in high else EXPLORATION for n in names)
    return BehaviorSchema(behaviors, intensity)


def default_ecommerce_schema() -> BehaviorSchema:
    """4-behavior funnel: view/click explore, cart/purchase commit."""
    return make_schema(["view", "click", "cart", "purchase"], {"cart", "purchase"})


@dataclass(frozen=True)
class Interaction:
    """A single (item, behavior, timestamp) event of one user."""

    user: str
    item: int
    category: int
    behavior: int
    timestamp: int


@dataclass(frozen=True)
class UserSequence:
    """All interactions of one user, ascending by timestamp.

    Ties keep input order (stable sort), so sequences are deterministic
    across runs for the same input file.
    """

    user: str
    interactions: tuple[Interaction, ...]

    @staticmethod
    def from_unsorted(user: str, interactions: list[Interaction]) -> "UserSequence":
        ordered = sorted(interactions, key=lambda it: it.timestamp)
        return UserSequence(user, tuple(ordered))

    def __len__(self) -> int:
        return len(self.interactions)


@dataclass(frozen=True)
class Catalog:
    """Item universe: |V| items, each mapped to a category id."""

    item_count: int
    category_of: tuple[int, ...]

    def __post_init__(self):
        if len(self.category_of) != self.item_count:
            raise ValueError("category_of must cover every item id")

    @property
    def category_count(self) -> int:
        return (max(self.category_of) + 1) if self.category_of else 0


@dataclass(frozen=True)
class Violation:
    kind: str
    detail: str


def validate_schema(
    schema: BehaviorSchema, catalog: Catalog, sequences: list[UserSequence]
) -> list[Violation]:
    """Collect consistency violations; an empty list means valid.

    Reports, never raises: unknown behavior ids, unknown items, unknown
    categories, non-monotone timestamps, mismatched user ids, and a flag
    for degenerate single-stratum partitions.
    """
    out: list[Violation] = []
    strata = set(schema.intensity)
    if len(strata) < 2:
        out.append(Violation("single_stratum", f"all behaviors map to intensity {strata.pop()}"))
    for seq in sequences:
        prev_ts = None
        for k, it in enumerate(seq.interactions):
            where = f"user {seq.user!r} position {k}"
            if it.user != seq.user:
                out.append(Violation("user_mismatch", f"{where}: interaction user {it.user!r}"))
            if not (0 <= it.behavior < schema.num_behaviors):
                out.append(Violation("unknown_behavior", f"{where}: behavior id {it.behavior}"))
            if not (0 <= it.item < catalog.item_count):
                out.append(Violation("unknown_item", f"{where}: item id {it.item}"))
            elif catalog.category_of[it.item] != it.category:
                out.append(
                    Violation(
                        "category_mismatch",
                        f"{where}: item {it.item} has category {catalog.category_of[it.item]}, "
                        f"interaction says {it.category}",
                    )
                )
            if it.timestamp < 0:
                out.append(Violation("negative_timestamp", f"{where}: {it.timestamp}"))
            if prev_ts is not None and it.timestamp < prev_ts:
                out.append(
                    Violation("non_monotone_timestamp", f"{where}: {it.timestamp} after {prev_ts}")
                )
            prev_ts = it.timestamp
    return out
