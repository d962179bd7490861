"""
The evaluation metrics on toy corpora
=====================================
"""

from swae.metrics import NgramLM, avg_len, bleu, distinct_n, perplexity, train_ngram_lm, unigram_kl, word_entropy

refs = [s.split() for s in ["a man is walking", "two dogs are running in the park", "the girl smiles"]]
hyps = [s.split() for s in ["a man is walking", "two dogs run in a park", "the girl is smiling"]]

print("BLEU        ", bleu(hyps, refs))
print("BLEU-2      ", bleu(hyps, refs, max_n=2))

# perplexity of a uniform model equals its vocabulary size (content words + EOS + UNK)
print("uniform PPL ", perplexity(NgramLM.uniform(list("abcdefgh")), [["a", "b"]]))
lm = train_ngram_lm(refs, n=3, k=0.01)
print("trigram PPL ", perplexity(lm, hyps))

print("UniKL       ", unigram_kl(hyps, refs))
print("entropy     ", word_entropy(hyps), "bits")
print("avg length  ", avg_len(hyps))
print("Dist-1/2    ", distinct_n(hyps, 1), distinct_n(hyps, 2))
