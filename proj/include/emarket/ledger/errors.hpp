#pragma once

#include <stdexcept>
#include <string>

namespace emarket::ledger {

enum class LedgerErrc {
  InvalidTransaction,
  NonceExhausted,
  InvalidPow,
  UnknownParent,
  InvalidTx,
  BadHeight,
  BadTxRoot,
  BadDifficulty,
  GenesisMismatch,
  NotFound,
  LedgerUnavailable,
  UnknownAccount,
  Corrupt,
};

const char* to_string(LedgerErrc code);

class LedgerError : public std::runtime_error {
 public:
  LedgerError(LedgerErrc code, const std::string& what)
      : std::runtime_error(what), code_(code) {}
  LedgerErrc code() const { return code_; }

 private:
  LedgerErrc code_;
};

}  // namespace emarket::ledger
