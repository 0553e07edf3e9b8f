#pragma once

#include <cstdint>
#include <vector>

#include "distrn/distrn.hpp"

namespace testutil {

using distrn::Matrix;
using distrn::Vector;

inline double uniform(distrn::Stream& rng, double lo, double hi)
{
    return lo + (hi - lo) * (1.0 - rng.uniform_open_closed());
}

/// Random strongly connected network: a directed ring plus random extra edges.
inline distrn::TransmissionNetwork random_network(std::size_t n, std::uint64_t seed, double density = 0.3,
                                                  double beta_hi = 0.3, double gamma_lo = 0.1,
                                                  double gamma_hi = 0.4)
{
    distrn::Stream rng = distrn::Stream::derive(seed, "test-network");
    const auto nn = static_cast<Eigen::Index>(n);
    Matrix b = Matrix::Zero(nn, nn);
    for (Eigen::Index i = 0; i < nn; ++i) {
        b(i, i) = uniform(rng, 0.02, beta_hi);
        if (nn > 1)
            b(i, (i + 1) % nn) = uniform(rng, 0.02, beta_hi);
        for (Eigen::Index j = 0; j < nn; ++j)
            if (b(i, j) == 0.0 && rng.uniform_open_closed() <= density)
                b(i, j) = uniform(rng, 0.0, beta_hi);
    }
    Vector g(nn);
    for (Eigen::Index i = 0; i < nn; ++i)
        g(i) = uniform(rng, gamma_lo, gamma_hi);
    return distrn::TransmissionNetwork(b, g);
}

inline distrn::EpidemicState random_state(std::size_t n, std::uint64_t seed, double x_lo = 0.01,
                                          double x_hi = 0.3)
{
    distrn::Stream rng = distrn::Stream::derive(seed, "test-state");
    const auto nn = static_cast<Eigen::Index>(n);
    distrn::EpidemicState st;
    st.s.resize(nn);
    st.x.resize(nn);
    st.r.resize(nn);
    for (Eigen::Index i = 0; i < nn; ++i) {
        st.x(i) = uniform(rng, x_lo, x_hi);
        st.r(i) = uniform(rng, 0.0, 0.2);
        st.s(i) = 1.0 - st.x(i) - st.r(i);
    }
    return st;
}

/// Random partition of n nodes into exactly m non-empty clusters.
inline distrn::Partition random_partition(std::size_t n, std::size_t m, std::uint64_t seed)
{
    distrn::Stream rng = distrn::Stream::derive(seed, "test-partition");
    std::vector<std::size_t> assignment(n);
    for (std::size_t i = 0; i < n; ++i)
        assignment[i] = i < m ? i : static_cast<std::size_t>(rng.below(m));
    assignment = distrn::shuffle(std::move(assignment), rng);
    return distrn::Partition::from_assignment(assignment);
}

inline distrn::TransmissionNetwork network_from(std::initializer_list<std::initializer_list<double>> rows,
                                                std::initializer_list<double> gamma)
{
    const auto n = static_cast<Eigen::Index>(rows.size());
    Matrix b(n, n);
    Eigen::Index i = 0;
    for (const auto& row : rows) {
        Eigen::Index j = 0;
        for (double v : row)
            b(i, j++) = v;
        ++i;
    }
    Vector g(n);
    i = 0;
    for (double v : gamma)
        g(i++) = v;
    return distrn::TransmissionNetwork(b, g);
}

inline distrn::EpidemicState state_from(std::initializer_list<double> s, std::initializer_list<double> x)
{
    distrn::EpidemicState st;
    const auto n = static_cast<Eigen::Index>(x.size());
    st.s.resize(n);
    st.x.resize(n);
    st.r.resize(n);
    Eigen::Index i = 0;
    for (double v : s)
        st.s(i++) = v;
    i = 0;
    for (double v : x)
        st.x(i++) = v;
    st.r = (Vector::Ones(n) - st.s - st.x).cwiseMax(0.0);
    return st;
}

} // namespace testutil
