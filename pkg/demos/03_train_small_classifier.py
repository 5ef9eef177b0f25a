"""
Training a small cascade classifier
===================================

A reduced-width CNN feeding a BiLSTM, trained for eight epochs on a synthetic
three-class corpus, then scored per segment and per record.
"""

from ecgrhythm import (CnnBackboneConfig, ModelConfig, SynthDatasetSpec, TrainConfig, build_model,
                       evaluate, segment_dataset, segments_to_arrays, split_dataset, synth_dataset,
                       train)

ds, _ = synth_dataset(SynthDatasetSpec(n=60, seed=1))
train_ds, val_ds = split_dataset(ds, 0.7, seed=1)

# Preprocess, detect and segment; ``val_index`` maps record id -> segment rows
train_segs, _ = segment_dataset(train_ds)
val_segs, val_index = segment_dataset(val_ds)
x_tr, y_tr = segments_to_arrays(train_segs)
x_val, y_val = segments_to_arrays(val_segs)
print(len(train_segs), "training segments,", len(val_segs), "validation segments")

cfg = ModelConfig("cascade", CnnBackboneConfig.with_channels((8, 16, 32, 64)), lstm_hidden=32)
model = build_model(cfg, seed=1)
print(model.num_parameters(), "parameters")

result = train(model, x_tr, y_tr, x_val, y_val, TrainConfig(epochs=8, seed=1), log=print)

model.load_state_dict(result.best_state)
seg_rep, rec_rep = evaluate(model, x_val, y_val, val_index)
print(f"best epoch {result.best_epoch}: segment weighted F1 {seg_rep['weighted_f1']:.3f}, "
      f"record weighted F1 {rec_rep['weighted_f1']:.3f}")
print("record confusion (rows true N/A/O):", rec_rep["confusion_matrix"])
