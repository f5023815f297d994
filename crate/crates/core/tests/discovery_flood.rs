//! Flood route discovery over small static graphs, checked against a
//! brute-force simple-path enumerator.

use std::collections::{BTreeSet, HashSet, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use smt_core::crypto::{CryptoProvider, SimulatedCrypto};
use smt_core::discovery::{DiscoveryNode, RequestAction, RouteRequest, RouteResponse};
use smt_core::{NodeId, Path};

struct Graph {
    adj: Vec<BTreeSet<usize>>,
}

impl Graph {
    fn random(nodes: usize, p: f64, rng: &mut ChaCha8Rng) -> Self {
        let mut adj = vec![BTreeSet::new(); nodes];
        for a in 0..nodes {
            for b in a + 1..nodes {
                if rng.random_bool(p) {
                    adj[a].insert(b);
                    adj[b].insert(a);
                }
            }
        }
        Graph { adj }
    }

    fn from_edges(nodes: usize, edges: &[(usize, usize)]) -> Self {
        let mut adj = vec![BTreeSet::new(); nodes];
        for &(a, b) in edges {
            adj[a].insert(b);
            adj[b].insert(a);
        }
        Graph { adj }
    }

    fn all_simple_paths(&self, s: usize, d: usize) -> HashSet<Vec<u32>> {
        fn dfs(g: &Graph, at: usize, d: usize, stack: &mut Vec<usize>, out: &mut HashSet<Vec<u32>>) {
            if at == d {
                out.insert(stack.iter().map(|&n| n as u32).collect());
                return;
            }
            for &nb in &g.adj[at] {
                if !stack.contains(&nb) {
                    stack.push(nb);
                    dfs(g, nb, d, stack, out);
                    stack.pop();
                }
            }
        }
        let mut out = HashSet::new();
        dfs(self, s, d, &mut vec![s], &mut out);
        out
    }
}

enum Msg {
    Req(RouteRequest),
    Resp(RouteResponse),
}

/// Unit-latency flood: FIFO delivery approximates equal per-hop delay.
/// `tamper` may rewrite any request a given node is about to broadcast.
fn flood(
    g: &Graph,
    crypto: &dyn CryptoProvider,
    s: usize,
    d: usize,
    tamper: &dyn Fn(usize, RouteRequest) -> RouteRequest,
) -> (Vec<Path>, Vec<DiscoveryNode>) {
    let mut nodes: Vec<DiscoveryNode> = (0..g.adj.len()).map(|i| DiscoveryNode::new(NodeId(i as u32))).collect();
    let mut queue: VecDeque<(usize, Msg)> = VecDeque::new();
    let req = nodes[s].initiate_request(crypto, NodeId(d as u32), vec![], 0.0);
    for &nb in &g.adj[s] {
        queue.push_back((nb, Msg::Req(req.clone())));
    }
    let mut now = 0.0;
    while let Some((at, msg)) = queue.pop_front() {
        now += 1.0;
        match msg {
            Msg::Req(r) => match nodes[at].receive_request(crypto, &r, now) {
                RequestAction::Rebroadcast(out) => {
                    let out = tamper(at, out);
                    for &nb in &g.adj[at] {
                        queue.push_back((nb, Msg::Req(out.clone())));
                    }
                }
                RequestAction::Respond(resp) => {
                    let prev = resp.discovered_path.nodes()[resp.discovered_path.nodes().len() - 2];
                    queue.push_back((prev.0 as usize, Msg::Resp(resp)));
                }
                RequestAction::Drop(_) => {}
            },
            Msg::Resp(resp) => {
                if at == s {
                    let _ = nodes[s].accept_response(crypto, &resp, now);
                } else if let Some(prev) = nodes[at].relay_response(crypto, &resp) {
                    assert!(g.adj[at].contains(&(prev.0 as usize)));
                    queue.push_back((prev.0 as usize, Msg::Resp(resp)));
                }
            }
        }
    }
    let paths = nodes[s].candidates(NodeId(d as u32)).iter().map(|c| c.path.clone()).collect();
    (paths, nodes)
}

#[test]
fn discovered_paths_are_real_simple_paths() {
    let crypto = SimulatedCrypto::new(21);
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut connected_cases = 0;
    for trial in 0..300 {
        let n = 2 + trial % 7;
        let g = Graph::random(n, 0.4, &mut rng);
        let (s, d) = (0, n - 1);
        let oracle = g.all_simple_paths(s, d);
        let (found, _) = flood(&g, &crypto, s, d, &|_, r| r);
        assert_eq!(found.is_empty(), oracle.is_empty(), "trial {trial}");
        connected_cases += usize::from(!oracle.is_empty());
        let mut seen = HashSet::new();
        for p in &found {
            let ids: Vec<u32> = p.nodes().iter().map(|n| n.0).collect();
            assert!(oracle.contains(&ids), "trial {trial}: {ids:?} not a simple path");
            assert!(seen.insert(ids), "duplicate stored route");
        }
    }
    assert!(connected_cases > 100);
}

#[test]
fn diamond_yields_both_arms() {
    // 0 - {1 - 2 | 4 - 5} - 3
    let g = Graph::from_edges(6, &[(0, 1), (1, 2), (2, 3), (0, 4), (4, 5), (5, 3)]);
    let crypto = SimulatedCrypto::new(1);
    let (found, _) = flood(&g, &crypto, 0, 3, &|_, r| r);
    let got: BTreeSet<Vec<u32>> = found.iter().map(|p| p.nodes().iter().map(|n| n.0).collect()).collect();
    assert_eq!(got, BTreeSet::from([vec![0, 1, 2, 3], vec![0, 4, 5, 3]]));
}

#[test]
fn forged_hop_signature_never_yields_a_route() {
    // line 0 - 1 - 2; node 1 rewrites its own hop signature
    let g = Graph::from_edges(3, &[(0, 1), (1, 2)]);
    let crypto = SimulatedCrypto::new(4);
    let (found, nodes) = flood(&g, &crypto, 0, 2, &|at, mut r| {
        if at == 1 {
            *r.hop_signatures.last_mut().unwrap() ^= 0xffff;
        }
        r
    });
    assert!(found.is_empty());
    assert_eq!(nodes[2].stats().forged_dropped, 1);
    assert_eq!(nodes[2].stats().responses_sent, 0);
}
