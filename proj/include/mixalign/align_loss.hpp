#pragma once

// Inter-domain alignment penalty on pooled channel descriptors.

#include <cstddef>
#include <span>
#include <vector>

#include "mixalign/tensor.hpp"

namespace mixalign {

// Batch indices grouped by domain, only for domains present in the batch.
struct DomainPartition {
  std::vector<int> domains;                       // present domain ids, in known-set order
  std::vector<std::vector<std::size_t>> members;  // members[d] are batch indices of domains[d]

  std::size_t size() const { return domains.size(); }
  bool empty() const { return domains.empty(); }
};

// Ids outside known_domains are rejected. An empty known set accepts every id
// and orders domains by first appearance.
DomainPartition drop_absent_domains(std::span<const int> domain_ids, std::span<const int> known_domains);

// Global average pool: [B,C,H,W] -> [B,C].
Tensor channel_descriptor(const Tensor& features);

// (1/C) sum_c log(1 + s_c^2), where s_c^2 is the population variance across
// present domains of the per-domain mean descriptor.
Tensor alignment_loss(const Tensor& descriptors, const DomainPartition& partition);

}  // namespace mixalign
