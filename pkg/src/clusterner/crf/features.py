"""Observation attributes for the CRF tagger.

Each attribute is a namespaced string tagged with the token offset it
looks at, e.g. ``W:Obama@0``, ``SH:Xxxxx@0``, ``CL:de:217@-1``.
"""

from dataclasses import dataclass, field, fields
from typing import Dict, List, Mapping, Sequence, Tuple

from ..errors import DataError

BOS = "<BOS>"
EOS = "<EOS>"


@dataclass(frozen=True)
class FeatureConfig:
    context_window: int = 1
    use_shape: bool = True
    use_prefix_suffix: bool = True
    affix_max: int = 3
    use_pos: bool = True
    use_lemma: bool = True
    use_bigrams: bool = True
    cluster_window: int = 1
    cluster_sources: Tuple[str, ...] = ()

    def __post_init__(self):
        if self.context_window < 0 or self.cluster_window < 0:
            raise ValueError("window radii must be >= 0")
        if len(set(self.cluster_sources)) != len(self.cluster_sources):
            raise ValueError("cluster_sources must be distinct")
        object.__setattr__(self, "cluster_sources", tuple(self.cluster_sources))

    def items(self) -> List[Tuple[str, str]]:
        out = []
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, tuple):
                v = ",".join(v)
            elif isinstance(v, bool):
                v = "true" if v else "false"
            out.append((f.name, str(v)))
        return out

    @classmethod
    def from_items(cls, items: Mapping[str, str], **overrides) -> "FeatureConfig":
        kwargs = {}
        types = {f.name: f.type for f in fields(cls)}
        for key, value in items.items():
            if key not in types:
                raise ValueError(f"unknown feature option {key!r}")
            kwargs[key] = _coerce(key, value, getattr(cls, key, None) if key != "cluster_sources" else ())
        kwargs.update(overrides)
        return cls(**kwargs)


def _coerce(key, value, default):
    if not isinstance(value, str):
        return value
    if key == "cluster_sources":
        return tuple(v for v in value.split(",") if v)
    if isinstance(default, bool):
        if value.lower() in ("1", "true", "yes", "on"):
            return True
        if value.lower() in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"{key}: expected a boolean, got {value!r}")
    return int(value)


def word_shape(word: str) -> str:
    """Map characters to X/x/d (others kept) and cut runs longer than 4 to 4 plus ``*``."""
    out = []
    prev, run = None, 0
    for ch in word:
        if ch.isupper():
            m = "X"
        elif ch.islower():
            m = "x"
        elif ch.isdigit():
            m = "d"
        else:
            m = ch
        if m == prev:
            run += 1
        else:
            prev, run = m, 1
        if run <= 4:
            out.append(m)
        elif run == 5:
            out.append("*")
    return "".join(out)


def extract_features(sentence, position: int, config: FeatureConfig,
                     clusterings: Mapping[str, Mapping[str, int]] = None) -> List[str]:
    """Attributes firing at ``position``, duplicate-free and in a fixed order.

    ``sentence`` is a :class:`~clusterner.corpus.Sentence` or a list of
    word strings.  ``clusterings`` maps source ids to word -> cluster-id
    lookups (a :class:`~clusterner.clustering.Clustering` works).
    """
    tokens = getattr(sentence, "tokens", None)
    words = [t.surface for t in tokens] if tokens is not None else list(sentence)
    n = len(words)
    if not 0 <= position < n:
        raise IndexError(f"position {position} outside sentence of length {n}")
    clusterings = clusterings or {}
    feats = ["BIAS"]

    def word_at(j):
        if j < 0:
            return BOS
        if j >= n:
            return EOS
        return words[j]

    cw = config.context_window
    for off in range(-cw, cw + 1):
        feats.append(f"W:{word_at(position + off)}@{off}")
    if config.use_shape:
        for off in range(-cw, cw + 1):
            j = position + off
            if 0 <= j < n:
                feats.append(f"SH:{word_shape(words[j])}@{off}")
    if config.use_prefix_suffix:
        w = words[position]
        for k in range(1, min(config.affix_max, len(w)) + 1):
            feats.append(f"P{k}:{w[:k]}")
            feats.append(f"S{k}:{w[-k:]}")
    if tokens is not None and (config.use_pos or config.use_lemma):
        for off in range(-cw, cw + 1):
            j = position + off
            if not 0 <= j < n:
                continue
            if config.use_pos and tokens[j].pos is not None:
                feats.append(f"POS:{tokens[j].pos}@{off}")
            if config.use_lemma and tokens[j].lemma is not None:
                feats.append(f"LEM:{tokens[j].lemma}@{off}")
    if config.use_bigrams:
        feats.append(f"BG:{word_at(position - 1)}|{words[position]}@-1")
        feats.append(f"BG:{words[position]}|{word_at(position + 1)}@0")
    for src in config.cluster_sources:
        if src not in clusterings:
            raise DataError(f"unknown clustering {src!r}")
        lookup = clusterings[src]
        for off in range(-config.cluster_window, config.cluster_window + 1):
            j = position + off
            if 0 <= j < n:
                cid = lookup.get(words[j])
                feats.append(f"CL:{src}:{'NOCLUSTER' if cid is None else cid}@{off}")
    return list(dict.fromkeys(feats))


def sentence_features(sentence, config: FeatureConfig, clusterings=None) -> List[List[str]]:
    n = len(getattr(sentence, "tokens", sentence))
    return [extract_features(sentence, i, config, clusterings) for i in range(n)]
