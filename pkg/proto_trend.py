"""Throwaway prototype: desk-scale L_max trend on synthetic countries."""
import tempfile, time
import numpy as np
import torch
from pathagg import kg, walks, datasets, lm

torch.set_num_threads(2)

gen = datasets.make_countries(seed=0)
d = tempfile.mkdtemp()
paths = gen.write(d)
split = kg.load_split(paths["train"], paths["test"], paths["valid"])
g = split.train_graph
vocab = walks.Vocabulary.from_graph(g)

# answer index from train + test
answers = {}
for h, r, t in list(g.triples) + split.test_triples:
    answers.setdefault((h, r), set()).add(t)

def accuracy(model):
    qs = [(h, r) for h, r, t in split.test_triples]
    logits = lm.entity_logits(model, vocab, qs)
    preds = logits.argmax(axis=1)
    correct = sum(int(p) in answers[(h, r)] for (h, r, t), p in zip(split.test_triples, preds))
    return correct / len(split.test_triples), preds

results = {}
for l_max, n_walks in ((1, 15000), (5, 6000)):
    t0 = time.time()
    corpus = walks.build_corpus(g, vocab, l_max=l_max, num_walks=n_walks, t_chunk=32, seed=100 + l_max)
    cfg = lm.LmConfig(vocab_size=vocab.size, context_len=32, layers=4, heads=4,
                      model_dim=128, dropout=0.0, seed=0)
    model = lm.init_model(cfg)
    tc = lm.TrainConfig(steps=3000, batch_size=16, learning_rate=5e-4, seed=0)
    hist = lm.train(model, corpus, tc)
    acc, preds = accuracy(model)
    results[l_max] = acc
    print(f"L_max={l_max}: corpus={corpus.n_chunks} chunks, "
          f"final loss={np.mean([v for _, v in hist[-50:]]):.4f}, acc={acc:.3f}, "
          f"time={time.time()-t0:.0f}s", flush=True)
    names = [g.entities.name_of(int(p)) for p in preds[:8]]
    print("  sample preds:", names, flush=True)

print("gap:", results[5] - results[1])
