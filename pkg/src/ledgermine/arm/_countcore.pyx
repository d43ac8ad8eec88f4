# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled subset-counting kernel over bitset-encoded transactions.

Transactions and candidate itemsets are rows of 64-bit words; a candidate
is contained in a transaction iff every candidate bit is set in the
transaction row. Counting these containments per candidate is the hot
loop of level-wise frequent-itemset mining.
"""


def count_subsets(const unsigned long long[:, ::1] txn_words,
                  const unsigned long long[:, ::1] cand_words,
                  long long[::1] out):
    """Fill ``out[j]`` with the number of transaction rows containing
    candidate row ``j``. Word counts of both matrices must match."""
    cdef Py_ssize_t n_txn = txn_words.shape[0]
    cdef Py_ssize_t n_words = txn_words.shape[1]
    cdef Py_ssize_t n_cand = cand_words.shape[0]
    cdef Py_ssize_t i, j, w
    cdef long long hits
    cdef unsigned long long cw
    cdef bint contained

    if n_cand and cand_words.shape[1] != n_words:
        raise ValueError("word count mismatch between transactions and candidates")
    if out.shape[0] != n_cand:
        raise ValueError("output length must equal candidate count")

    with nogil:
        for j in range(n_cand):
            hits = 0
            for i in range(n_txn):
                contained = True
                for w in range(n_words):
                    cw = cand_words[j, w]
                    if (txn_words[i, w] & cw) != cw:
                        contained = False
                        break
                if contained:
                    hits += 1
            out[j] = hits
