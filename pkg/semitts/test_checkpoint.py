"""
Testes do formato de checkpoint
"""

import struct

import numpy as np
import pytest

from .checkpoint import MAGIC, Checkpoint, decode_container, encode_container, load_checkpoint, save_checkpoint
from .errors import CheckpointIntegrityError, UnsupportedVersionError
from .optim import AdamState
from .tacotron import PAIRED, TacotronModel
from .text_frontend import text_to_sequence
from .training import collate_paired, Utterance
from .conftest import tiny_model_config


def _model(lexicon, seed=0):
    return TacotronModel.initialize(tiny_model_config(n_tokens=lexicon.n_tokens), seed)


def _checkpoint(model):
    adam = AdamState.for_params(model.params)
    adam.t = 3
    return Checkpoint(model_config=model.config.to_dict(), params=model.params, adam=adam, step=3,
                      rng_state={"seed": 0, "stream": "finetune-step", "step": 3}, tag="finetuned",
                      metadata={"validation_history": [[2, 1.5]]})


def test_save_load_save_byte_identical(tmp_path, lexicon):
    first, second = tmp_path / "a.ckpt", tmp_path / "b.ckpt"
    save_checkpoint(first, _checkpoint(_model(lexicon)))
    save_checkpoint(second, load_checkpoint(first))
    assert first.read_bytes() == second.read_bytes()


def test_loaded_model_forward_is_identical(tmp_path, lexicon):
    model = _model(lexicon, seed=5)
    path = tmp_path / "m.ckpt"
    save_checkpoint(path, _checkpoint(model))
    loaded = load_checkpoint(path)
    restored = TacotronModel(model.config, loaded.params)

    tokens = text_to_sequence("thank you", lexicon)
    item = Utterance(id="u", mel=np.random.default_rng(0).normal(size=(6, 8)), tokens=tokens)
    batch = collate_paired([item], r=2)
    pred_a, stop_a = model.forward_teacher_forced(batch, PAIRED, training=False)
    pred_b, stop_b = restored.forward_teacher_forced(batch, PAIRED, training=False)
    assert pred_a.data.tobytes() == pred_b.data.tobytes()
    assert stop_a.data.tobytes() == stop_b.data.tobytes()
    assert loaded.adam.t == 3
    assert loaded.rng_state["step"] == 3
    assert loaded.config_hash == _checkpoint(model).config_hash


def test_flipped_version_rejected(tmp_path, lexicon):
    path = tmp_path / "m.ckpt"
    save_checkpoint(path, _checkpoint(_model(lexicon)))
    blob = bytearray(path.read_bytes())
    blob[len(MAGIC)] ^= 0xFF
    path.write_bytes(bytes(blob))
    with pytest.raises(UnsupportedVersionError):
        load_checkpoint(path)


def test_truncated_file_rejected(tmp_path, lexicon):
    path = tmp_path / "m.ckpt"
    save_checkpoint(path, _checkpoint(_model(lexicon)))
    path.write_bytes(path.read_bytes()[:-100])
    with pytest.raises(CheckpointIntegrityError):
        load_checkpoint(path)


def test_corrupted_payload_rejected():
    blob = bytearray(encode_container({"k": 1}, {"x": np.arange(6.0).reshape(2, 3)}))
    blob[-40] ^= 0x01
    with pytest.raises(CheckpointIntegrityError):
        decode_container(bytes(blob))


def test_container_header_layout():
    blob = encode_container({"k": "v"}, {"scalar": np.array(2.5), "m": np.ones((2, 2))})
    assert blob[:4] == MAGIC
    version, header_len = struct.unpack_from("<HI", blob, 4)
    assert version == 1
    header, tensors = decode_container(blob)
    assert header == {"k": "v"}
    assert tensors["scalar"].shape == ()
    np.testing.assert_array_equal(tensors["m"], np.ones((2, 2)))
    assert header_len == len(b'{"k":"v"}')
