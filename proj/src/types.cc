#include <array>
#include <string_view>

#include "geotxn/messages.h"
#include "geotxn/types.h"

namespace geotxn {

namespace {

constexpr std::array<const char*, 7> kAbortReasonNames = {
    "none", "admission", "lock_timeout", "peer_failure", "site_failure", "coordinator_failure",
    "client",
};

}  // namespace

const char* to_string(AbortReason reason) {
  return kAbortReasonNames.at(static_cast<std::size_t>(reason));
}

AbortReason abort_reason_from_string(const std::string& s) {
  for (std::size_t i = 0; i < kAbortReasonNames.size(); ++i) {
    if (s == kAbortReasonNames[i]) return static_cast<AbortReason>(i);
  }
  throw std::invalid_argument("unknown abort reason: " + s);
}

const char* to_string(MsgKind kind) {
  switch (kind) {
    case MsgKind::kStatement: return "STATEMENT";
    case MsgKind::kPrepare: return "PREPARE";
    case MsgKind::kCommit: return "COMMIT";
    case MsgKind::kCommitOnePhase: return "COMMIT_ONE_PHASE";
    case MsgKind::kRollback: return "ROLLBACK";
    case MsgKind::kQuery: return "QUERY";
    case MsgKind::kListPrepared: return "LIST_PREPARED";
    case MsgKind::kProbe: return "PROBE";
    case MsgKind::kResult: return "RESULT";
    case MsgKind::kPrepared: return "PREPARED";
    case MsgKind::kIdle: return "IDLE";
    case MsgKind::kVoteNo: return "VOTE_NO";
    case MsgKind::kFailure: return "FAILURE";
    case MsgKind::kRollbackOnly: return "ROLLBACK_ONLY";
    case MsgKind::kRollbacked: return "ROLLBACKED";
    case MsgKind::kCommitted: return "COMMITTED";
    case MsgKind::kQueryReply: return "QUERY_REPLY";
    case MsgKind::kPreparedList: return "PREPARED_LIST";
    case MsgKind::kProbeReply: return "PROBE_REPLY";
    case MsgKind::kReconnect: return "RECONNECT";
    case MsgKind::kPeerRollback: return "PEER_ROLLBACK";
  }
  return "?";
}

const char* to_string(XaState state) {
  switch (state) {
    case XaState::kActive: return "active";
    case XaState::kEnded: return "ended";
    case XaState::kPrepared: return "prepared";
    case XaState::kCommitted: return "committed";
    case XaState::kAborted: return "aborted";
  }
  return "?";
}

}  // namespace geotxn
