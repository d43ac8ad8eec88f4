"""ledgermine: association-rule mining over a replicated hash-linked ledger.

An append-only block ledger feeds exact Apriori mining through four
execution paths (sequential, threaded SMP, simulated master/worker MPP,
sliding-window streaming), with a deterministic contract state machine
automating the solicit / submit / evaluate / reward cycle for mined
rule-set models.
"""

__version__ = "0.1.0"
