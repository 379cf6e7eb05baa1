#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "geotxn/types.h"

namespace geotxn {

enum class MsgKind : std::uint8_t {
  // coordinator -> site
  kStatement,
  kPrepare,
  kCommit,
  kCommitOnePhase,
  kRollback,
  kQuery,
  kListPrepared,
  kProbe,
  // site -> coordinator
  kResult,
  kPrepared,
  kIdle,
  kVoteNo,
  kFailure,
  kRollbackOnly,
  kRollbacked,
  kCommitted,
  kQueryReply,
  kPreparedList,
  kProbeReply,
  kReconnect,
  // agent -> agent
  kPeerRollback,
};

const char* to_string(MsgKind kind);

// Subtransaction state as reported by a data source.
enum class XaState : std::uint8_t { kActive, kEnded, kPrepared, kCommitted, kAborted };

const char* to_string(XaState state);

struct Message {
  MsgKind kind = MsgKind::kProbe;
  SiteId src = 0;
  SiteId dst = 0;
  TxnId tid = 0;

  // kStatement
  std::uint32_t round = 0;
  std::vector<Op> ops;
  bool is_last = false;
  bool first = false;
  std::vector<SiteId> peers;

  // kResult / votes: local execution latency accumulated so far.
  Duration lel = 0;
  // Set when the sender's subtransaction is already final-aborted.
  bool site_final = false;
  // The sending agent already told its peers to roll back.
  bool peers_notified = false;
  AbortReason reason = AbortReason::kNone;

  // kCommitted / kRollbacked: lock span of the subtransaction.
  std::optional<SimTime> first_lock_at;
  std::optional<SimTime> last_unlock_at;

  // kQueryReply
  std::optional<XaState> state;
  // kPreparedList
  std::vector<TxnId> xids;
  // kProbe / kProbeReply
  SimTime probe_sent_at = 0;
};

}  // namespace geotxn
