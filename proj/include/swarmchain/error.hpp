#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace swarmchain {

enum class Errc {
  // chain-core
  InvalidLinkage,
  InvalidProof,
  InsufficientBalance,
  InvalidBlock,
  EmptyInput,
  // pow
  NoProof,
  // resource-estimator
  ZeroElapsed,
  InsufficientHistory,
  NoEligibleNodes,
  // data-quality
  UnknownChannelCount,
  InsufficientCalibration,
  Incomparable,
  SelfValidation,
  // allocation
  TypeMismatch,
  MissingQuality,
  // network-sim
  AdmissionTimeout,
  NoLink,
  // input parsing
  ParseError,
};

constexpr std::string_view errc_name(Errc code) noexcept {
  switch (code) {
    case Errc::InvalidLinkage: return "InvalidLinkage";
    case Errc::InvalidProof: return "InvalidProof";
    case Errc::InsufficientBalance: return "InsufficientBalance";
    case Errc::InvalidBlock: return "InvalidBlock";
    case Errc::EmptyInput: return "EmptyInput";
    case Errc::NoProof: return "NoProof";
    case Errc::ZeroElapsed: return "ZeroElapsed";
    case Errc::InsufficientHistory: return "InsufficientHistory";
    case Errc::NoEligibleNodes: return "NoEligibleNodes";
    case Errc::UnknownChannelCount: return "UnknownChannelCount";
    case Errc::InsufficientCalibration: return "InsufficientCalibration";
    case Errc::Incomparable: return "Incomparable";
    case Errc::SelfValidation: return "SelfValidation";
    case Errc::TypeMismatch: return "TypeMismatch";
    case Errc::MissingQuality: return "MissingQuality";
    case Errc::AdmissionTimeout: return "AdmissionTimeout";
    case Errc::NoLink: return "NoLink";
    case Errc::ParseError: return "ParseError";
  }
  return "Unknown";
}

/// Every fallible operation in the library throws this; `code()` names the
/// failure kind so callers (and tests) can branch without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace swarmchain
