#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

namespace softhjb {

// Per-iteration error bookkeeping for a PINN-SPI run.
struct LedgerRow {
    int n = 0;
    double value_loss = std::nan("");
    double policy_loss = std::nan("");
    double step8_metric = std::nan("");
    double q_norm = std::nan("");          // residual L2(X) estimate
    double r_norm = std::nan("");          // policy-gap L2(X) estimate
    double kl_mean = std::nan("");
    double oracle_l2 = std::nan("");       // filled when an oracle is available
    double reward_estimate = std::nan(""); // filled when rollout evaluation runs
};

struct ErrorLedger {
    std::vector<LedgerRow> rows;

    void append(LedgerRow row) {
        if (!rows.empty() && row.n <= rows.back().n)
            throw std::invalid_argument("ledger: iteration index must be strictly increasing");
        rows.push_back(std::move(row));
    }
};

}  // namespace softhjb
