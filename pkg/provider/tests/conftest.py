import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))  # for helpers.py

from helpers import BE_FRAMES

FIXTURE_SEED = 11
FINAL_STEP = 3000


def training_lines():
    """Sentences covering the stimulus vocabulary so the fixture
    tokenizer learns word-level pieces for them."""
    lines = []
    for subj_sg, subj_pl, prep, attr_sg, attr_pl in BE_FRAMES:
        lines.append(f"the {subj_sg} {prep} the {attr_sg} is old")
        lines.append(f"the {subj_pl} {prep} the {attr_pl} are old")
        lines.append(f"the {attr_sg} is near the {subj_sg}")
        lines.append(f"the {attr_pl} are near the {subj_pl}")
    lines += [
        "the athlete near the bike knows the way",
        "the athletes near the bikes know the way",
        "a b c d e f g",
        "numbers 0 1 2 3 4 5 6 7 8 9",
    ]
    return lines


def build_checkpoint(root: Path) -> Path:
    """A real (random-weight) GPT-NeoX-class checkpoint with a locally
    trained byte-level BPE tokenizer, saved under step<FINAL_STEP>/."""
    import torch
    from tokenizers import Tokenizer, decoders, models, pre_tokenizers, trainers
    from transformers import GPTNeoXConfig, GPTNeoXForCausalLM, PreTrainedTokenizerFast

    tok = Tokenizer(models.BPE(unk_token=None))
    tok.pre_tokenizer = pre_tokenizers.ByteLevel(add_prefix_space=False)
    tok.decoder = decoders.ByteLevel()
    trainer = trainers.BpeTrainer(
        vocab_size=800,
        min_frequency=1,
        special_tokens=["<|endoftext|>"],
        initial_alphabet=pre_tokenizers.ByteLevel.alphabet(),
    )
    tok.train_from_iterator(training_lines(), trainer)
    fast = PreTrainedTokenizerFast(
        tokenizer_object=tok, bos_token="<|endoftext|>", eos_token="<|endoftext|>"
    )
    config = GPTNeoXConfig(
        vocab_size=len(fast),
        hidden_size=64,
        num_hidden_layers=2,
        num_attention_heads=4,
        intermediate_size=128,
        max_position_embeddings=128,
    )
    torch.manual_seed(FIXTURE_SEED)
    model = GPTNeoXForCausalLM(config)
    target = root / f"step{FINAL_STEP}"
    model.save_pretrained(target)
    fast.save_pretrained(target)
    return root


@pytest.fixture(scope="session")
def checkpoint_root(tmp_path_factory):
    return build_checkpoint(tmp_path_factory.mktemp("checkpoints"))
