"""Item-oriented knowledge graph: R-GCN node encoding, entity
self-attention, the knowledge-aware bias over the item vocabulary and the
entity-prediction loss.

All tensors are float64; the graph is desk-scale so each relation is
aggregated with a dense index_add rather than sparse kernels.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
from torch import nn

from .errors import CorpusError, DimensionError


@dataclass
class KnowledgeGraph:
    """Entity/relation sets plus an in-neighbor index.

    A triple (e1, r, e2) is an edge e1 -> e2: e1 is an in-neighbor of e2
    under relation r.
    """

    entity_ids: list[str]
    relation_ids: list[str]
    triples: list[tuple[int, int, int]]

    def __post_init__(self):
        self.entity_index = {e: i for i, e in enumerate(self.entity_ids)}
        self.relation_index = {r: i for i, r in enumerate(self.relation_ids)}
        n, nr = len(self.entity_ids), len(self.relation_ids)
        for (e1, r, e2) in self.triples:
            if not (0 <= e1 < n and 0 <= e2 < n and 0 <= r < nr):
                raise CorpusError(f"triple ({e1},{r},{e2}) out of range")
        # per-relation edge tensors and in-degree counts Z[e, r]
        self._edges: list[tuple[torch.Tensor, torch.Tensor]] = []
        self._degree = torch.zeros((n, nr), dtype=torch.float64)
        for r in range(nr):
            src = [e1 for (e1, rr, e2) in self.triples if rr == r]
            dst = [e2 for (e1, rr, e2) in self.triples if rr == r]
            self._edges.append((torch.tensor(src, dtype=torch.long),
                                torch.tensor(dst, dtype=torch.long)))
            for d in dst:
                self._degree[d, r] += 1.0

    @property
    def n_entities(self) -> int:
        return len(self.entity_ids)

    @property
    def n_relations(self) -> int:
        return len(self.relation_ids)

    def neighbors(self, entity: int, relation: int) -> list[int]:
        src, dst = self._edges[relation]
        return [int(s) for s, d in zip(src, dst) if int(d) == entity]

    @classmethod
    def load_triples(cls, path) -> "KnowledgeGraph":
        """Tab-separated entity_id, relation_id, entity_id per line;
        string ids are mapped to dense indices in order of first
        appearance."""
        entity_ids: list[str] = []
        relation_ids: list[str] = []
        eidx: dict[str, int] = {}
        ridx: dict[str, int] = {}
        triples: list[tuple[int, int, int]] = []
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.rstrip("\n")
                if not line:
                    continue
                parts = line.split("\t")
                if len(parts) != 3:
                    raise CorpusError(
                        f"{path}: expected 3 tab-separated fields at line {lineno}")
                e1, r, e2 = parts
                for e in (e1, e2):
                    if e not in eidx:
                        eidx[e] = len(entity_ids)
                        entity_ids.append(e)
                if r not in ridx:
                    ridx[r] = len(relation_ids)
                    relation_ids.append(r)
                triples.append((eidx[e1], ridx[r], eidx[e2]))
        return cls(entity_ids=entity_ids, relation_ids=relation_ids,
                   triples=triples)

    def save_triples(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for (e1, r, e2) in self.triples:
                fh.write(f"{self.entity_ids[e1]}\t{self.relation_ids[r]}"
                         f"\t{self.entity_ids[e2]}\n")


class KGParams(nn.Module):
    """Learnable graph-side parameters: base entity embeddings, per-layer
    relation/self transforms, the attention projection pair and the map
    from entity space into the item vocabulary."""

    def __init__(self, n_entities: int, n_relations: int, n_items: int,
                 d_entity: int = 128, d_attn: int = 64, n_layers: int = 1):
        super().__init__()
        if n_layers < 1 or d_entity <= 0 or d_attn <= 0:
            raise DimensionError("need n_layers >= 1 and positive widths")
        self.n_entities = n_entities
        self.n_relations = n_relations
        self.n_items = n_items
        self.d_entity = d_entity
        self.d_attn = d_attn
        self.n_layers = n_layers
        dt = torch.float64
        self.base_embeddings = nn.Parameter(
            0.1 * torch.randn(n_entities, d_entity, dtype=dt))
        self.rel_weights = nn.Parameter(
            0.1 * torch.randn(n_layers, n_relations, d_entity, d_entity, dtype=dt))
        self.self_weights = nn.Parameter(
            torch.eye(d_entity, dtype=dt).expand(n_layers, -1, -1).clone()
            + 0.01 * torch.randn(n_layers, d_entity, d_entity, dtype=dt))
        self.attn_proj = nn.Parameter(
            0.1 * torch.randn(d_attn, d_entity, dtype=dt))   # W_a1
        self.attn_score = nn.Parameter(
            0.1 * torch.randn(d_attn, dtype=dt))              # w_a2
        self.bias_map = nn.Parameter(
            0.1 * torch.randn(n_entities, n_items, dtype=dt))  # M_b


def rgcn_forward(kg: KnowledgeGraph, params: KGParams) -> torch.Tensor:
    """Layer-stacked relational propagation.

    Per layer: out[e] = sigma( sum_r sum_{e' in E_e^r} W_r h[e'] / Z_{e,r}
    + W h[e] ), with Z the in-neighbor count, ReLU between layers and
    identity at the last layer.
    """
    if params.n_entities != kg.n_entities or params.n_relations != kg.n_relations:
        raise DimensionError(
            f"params built for {params.n_entities}x{params.n_relations}, "
            f"graph has {kg.n_entities}x{kg.n_relations}")
    h = params.base_embeddings
    for layer in range(params.n_layers):
        out = h @ params.self_weights[layer].T
        for r in range(kg.n_relations):
            src, dst = kg._edges[r]
            if len(src) == 0:
                continue
            msg = (h[src] @ params.rel_weights[layer, r].T)
            z = kg._degree[dst, r].unsqueeze(1)
            out = out.index_add(0, dst, msg / z)
        h = torch.relu(out) if layer < params.n_layers - 1 else out
    return h


@dataclass
class UserEncoding:
    attention: torch.Tensor  # alpha over |T_u|
    vector: torch.Tensor     # t_u in d_entity
    bias: torch.Tensor | None = None  # b_u over |V_R| items


def attend_user(entity_indices: list[int], H: torch.Tensor,
                params: KGParams) -> UserEncoding:
    """Self-attention pooling over the user's context entities."""
    if not entity_indices:
        raise ValueError("attend_user requires a non-empty entity set")
    idx = torch.tensor(entity_indices, dtype=torch.long)
    Hu = H[idx]  # (k, d)
    scores = params.attn_score @ torch.tanh(params.attn_proj @ Hu.T)  # (k,)
    alpha = torch.softmax(scores, dim=0)
    t_u = alpha @ Hu
    return UserEncoding(attention=alpha, vector=t_u)


def knowledge_bias(entity_indices: list[int], H: torch.Tensor,
                   params: KGParams) -> torch.Tensor:
    """b_u = t_u H^T M_b over the item vocabulary; zero for an empty
    entity set (cold context contributes no prior)."""
    if not entity_indices:
        return torch.zeros(params.n_items, dtype=torch.float64)
    t_u = attend_user(entity_indices, H, params).vector
    return t_u @ H.T @ params.bias_map


def kg_loss(entity_indices: list[int], H: torch.Tensor, gold_entity: int,
            params: KGParams) -> torch.Tensor:
    """Cross entropy of predicting the gold entity from t_u H^T scores."""
    if not entity_indices:
        raise ValueError("kg_loss instance requires a non-empty entity set")
    if not 0 <= gold_entity < H.shape[0]:
        raise ValueError(f"gold entity {gold_entity} out of range")
    t_u = attend_user(entity_indices, H, params).vector
    scores = t_u @ H.T
    return -torch.log_softmax(scores, dim=0)[gold_entity]


def rank_entities(entity_indices: list[int], H: torch.Tensor,
                  params: KGParams) -> list[int]:
    """Entity ids sorted by t_u H^T descending; ties broken by ascending
    entity id."""
    if not entity_indices:
        raise ValueError("rank_entities requires a non-empty entity set")
    t_u = attend_user(entity_indices, H, params).vector
    scores = (t_u @ H.T).detach()
    return sorted(range(H.shape[0]), key=lambda e: (-float(scores[e]), e))
