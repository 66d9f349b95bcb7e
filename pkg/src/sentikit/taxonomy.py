"""Three-level emotion hierarchy: valence -> primary emotion -> fine class.

The default file shipped under ``data/`` follows Parrott's hierarchy at
2/6/25 granularity. Synonym lists in that file are a non-canonical sample;
replication studies should supply their own. Class-name matching is exact
after lowercasing and trimming, never fuzzy, so resolution stays
deterministic.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from importlib import resources

from .errors import DataError

__all__ = [
    "PromptTemplate",
    "Taxonomy",
    "load_taxonomy",
    "default_taxonomy",
    "expand_prompts",
    "resolve_prompt_class",
    "rollup",
]

DEFAULT_TAXONOMY_RESOURCE = "parrott.json"
MAX_SYNONYMS = 5
LEVELS = (2, 6, 25)


def _norm(name: str) -> str:
    return name.strip().lower()


@dataclass(frozen=True)
class PromptTemplate:
    """A prompt pattern with exactly one ``{}`` placeholder."""

    pattern: str

    def __post_init__(self):
        if self.pattern.count("{}") != 1:
            raise DataError(
                f"prompt template must contain exactly one '{{}}' placeholder: {self.pattern!r}"
            )

    def render(self, class_name: str) -> str:
        return self.pattern.replace("{}", class_name)


class Taxonomy:
    """Validated emotion hierarchy plus per-class synonym lists.

    Immutable after construction; all lookups are pure.
    """

    def __init__(
        self,
        valence_clusters: dict[str, list[str]],
        primaries: dict[str, list[str]],
        synonyms: dict[str, list[str]] | None = None,
        prompt_template: str | PromptTemplate = "a photo that seems to express {}",
    ):
        self.valence_clusters = {
            _norm(v): tuple(_norm(p) for p in ps) for v, ps in valence_clusters.items()
        }
        self.primaries = {
            _norm(p): tuple(_norm(f) for f in fs) for p, fs in primaries.items()
        }
        self.synonyms = {
            _norm(c): tuple(_norm(s) for s in ss) for c, ss in (synonyms or {}).items()
        }
        if isinstance(prompt_template, str):
            prompt_template = PromptTemplate(prompt_template)
        self.prompt_template = prompt_template

        self._primary_to_valence: dict[str, str] = {}
        for valence, prims in self.valence_clusters.items():
            for prim in prims:
                if prim in self._primary_to_valence:
                    raise DataError(f"primary class {prim!r} listed under two valences")
                if prim not in self.primaries:
                    raise DataError(f"primary class {prim!r} has no fine-class list")
                self._primary_to_valence[prim] = valence
        for prim in self.primaries:
            if prim not in self._primary_to_valence:
                raise DataError(f"orphan primary class {prim!r} (not under any valence)")

        self._fine_to_primary: dict[str, str] = {}
        fine_order: list[str] = []
        for valence, prims in self.valence_clusters.items():
            for prim in prims:
                for fine in self.primaries[prim]:
                    if fine in self._fine_to_primary:
                        raise DataError(f"fine class {fine!r} listed under two primaries")
                    self._fine_to_primary[fine] = prim
                    fine_order.append(fine)
        self.fine_classes: tuple[str, ...] = tuple(fine_order)
        if not self.fine_classes:
            raise DataError("taxonomy defines no fine classes")

        self._synonym_to_fine: dict[str, str] = {}
        for fine, syns in self.synonyms.items():
            if fine not in self._fine_to_primary:
                raise DataError(f"synonyms listed for unknown fine class {fine!r}")
            if len(syns) > MAX_SYNONYMS:
                raise DataError(
                    f"fine class {fine!r} has {len(syns)} synonyms (max {MAX_SYNONYMS})"
                )
            for syn in syns:
                if syn in self._fine_to_primary:
                    raise DataError(
                        f"synonym {syn!r} collides with a fine-class name"
                    )
                if syn in self._synonym_to_fine:
                    raise DataError(f"synonym {syn!r} registered for two classes")
                self._synonym_to_fine[syn] = fine

    @property
    def valences(self) -> tuple[str, ...]:
        return tuple(self.valence_clusters)

    @property
    def primary_classes(self) -> tuple[str, ...]:
        out = []
        for prims in self.valence_clusters.values():
            out.extend(prims)
        return tuple(out)

    def classes_at_level(self, level: int) -> tuple[str, ...]:
        if level == 25:
            return self.fine_classes
        if level == 6:
            return self.primary_classes
        if level == 2:
            return self.valences
        raise DataError(f"unknown taxonomy level {level!r} (expected one of {LEVELS})")

    def primary_of(self, fine: str) -> str:
        fine = _norm(fine)
        if fine not in self._fine_to_primary:
            raise DataError(f"unknown fine class {fine!r}")
        return self._fine_to_primary[fine]

    def valence_of(self, primary: str) -> str:
        primary = _norm(primary)
        if primary not in self._primary_to_valence:
            raise DataError(f"unknown primary class {primary!r}")
        return self._primary_to_valence[primary]

    @property
    def fingerprint(self) -> str:
        """Hash of the ordered fine-class list; identifies the label space a
        trained head is tied to."""
        payload = "\n".join(self.fine_classes).encode("utf-8")
        return hashlib.sha256(payload).hexdigest()[:16]

    def level_fingerprint(self, level: int) -> str:
        """Hash of the unordered class set at one level; two taxonomies are
        comparable at that level iff these match."""
        payload = "\n".join(sorted(self.classes_at_level(level))).encode("utf-8")
        return hashlib.sha256(payload).hexdigest()[:16]

    def to_dict(self) -> dict:
        return {
            "valence_clusters": {v: list(ps) for v, ps in self.valence_clusters.items()},
            "primaries": {p: list(fs) for p, fs in self.primaries.items()},
            "synonyms": {c: list(ss) for c, ss in self.synonyms.items()},
            "prompt_template": self.prompt_template.pattern,
        }

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, ensure_ascii=False) + "\n"


def _from_dict(doc: dict) -> Taxonomy:
    for key in ("valence_clusters", "primaries"):
        if key not in doc:
            raise DataError(f"taxonomy file is missing the {key!r} field")
    return Taxonomy(
        valence_clusters=doc["valence_clusters"],
        primaries=doc["primaries"],
        synonyms=doc.get("synonyms"),
        prompt_template=doc.get("prompt_template", "a photo that seems to express {}"),
    )


def load_taxonomy(path) -> Taxonomy:
    """Load and validate a taxonomy JSON file."""
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise DataError(f"taxonomy file {path} is not valid JSON: {exc}") from exc
    return _from_dict(doc)


def default_taxonomy() -> Taxonomy:
    """The packaged 2/6/25 hierarchy with sample synonyms."""
    text = (
        resources.files("sentikit").joinpath("data", DEFAULT_TAXONOMY_RESOURCE).read_text("utf-8")
    )
    return _from_dict(json.loads(text))


def expand_prompts(
    tax: Taxonomy,
    template: PromptTemplate | None = None,
    include_synonyms: bool = False,
) -> list[tuple[str, str]]:
    """One prompt per fine class, in taxonomy order, each class immediately
    followed by its synonym prompts when ``include_synonyms`` is set.

    Returns (prompt, fine_class) pairs.
    """
    template = template or tax.prompt_template
    out: list[tuple[str, str]] = []
    for fine in tax.fine_classes:
        out.append((template.render(fine), fine))
        if include_synonyms:
            for syn in tax.synonyms.get(fine, ()):
                out.append((template.render(syn), fine))
    return out


def resolve_prompt_class(tax: Taxonomy, class_or_synonym: str) -> str:
    """Map a fine-class name or registered synonym to its fine class."""
    name = _norm(class_or_synonym)
    if name in tax._fine_to_primary:
        return name
    if name in tax._synonym_to_fine:
        return tax._synonym_to_fine[name]
    raise DataError(f"unknown class or synonym {name!r}")


def rollup(tax: Taxonomy, fine: str, level: int) -> str:
    """Roll a fine class up the hierarchy: 25 -> identity, 6 -> primary,
    2 -> valence."""
    fine = _norm(fine)
    if fine not in tax._fine_to_primary:
        raise DataError(f"unknown fine class {fine!r}")
    if level == 25:
        return fine
    if level == 6:
        return tax.primary_of(fine)
    if level == 2:
        return tax.valence_of(tax.primary_of(fine))
    raise DataError(f"unknown taxonomy level {level!r} (expected one of {LEVELS})")
