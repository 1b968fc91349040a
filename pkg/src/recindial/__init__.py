"""Conversational recommendation through vocabulary-pointer constrained
generation with a knowledge-graph bias."""

from .corpus import (ContextResponsePair, Dialogue, Utterance, Vocabulary,
                     build_pairs, build_vocabulary, load_normalized,
                     load_redial, mark_items, split_dataset)
from .engine import ChatEngine, ChatTurn, DecodeConfig, Session, SessionStore
from .estimator import ConversationalRecommender
from .evalsuite import (EvalInstance, MetricsReport, bleu_n, bucket_recall,
                        build_report, distinct_n, item_ratio, recall_at_k,
                        rouge_l)
from .kgraph import (KGParams, KnowledgeGraph, UserEncoding, attend_user,
                     kg_loss, knowledge_bias, rank_entities, rgcn_forward)
from .seqmodel import (LogitScorer, ModelConfig, TransformerLM,
                       forward_logits, gen_loss, perplexity)
from .training import (Checkpoint, TrainConfig, TrainReport, grad_check,
                       load_checkpoint, save_checkpoint, train)
from .vpdecode import (BeamHypothesis, GenerationState, RecommendationResult,
                       advance, beam_generate, beam_recommend,
                       extract_topk_items, greedy_generate, step_mask)

__version__ = "0.1.0"
