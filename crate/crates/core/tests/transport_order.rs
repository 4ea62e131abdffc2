use ppf::rng::RngStream;
use ppf::transport::{
    allgather_u64, allreduce_sum, barrier, run_in_process, run_tcp_local, wait_all, Communicator,
    Source,
};

const TAGS: [u32; 3] = [3, 9, 40];
const PER_PAIR: usize = 25;

fn payload(src: usize, tag: u32, seq: usize) -> Vec<u8> {
    let mut v = Vec::new();
    v.extend_from_slice(&(src as u32).to_le_bytes());
    v.extend_from_slice(&tag.to_le_bytes());
    v.extend_from_slice(&(seq as u32).to_le_bytes());
    v.resize(12 + (seq * 37) % 300, 0xAB);
    v
}

fn field(p: &[u8], i: usize) -> usize {
    u32::from_le_bytes(p[4 * i..4 * i + 4].try_into().unwrap()) as usize
}

/// Every rank sends `PER_PAIR` messages per tag to every peer in a random
/// order, then drains them in a different random order of (source, tag).
fn exercise<C: Communicator + ?Sized>(c: &mut C, seed: u64) -> bool {
    let (me, n) = (c.rank(), c.size());
    let mut rng = RngStream::new(seed, me as u64);
    let mut pending: Vec<(usize, u32)> = (0..n)
        .filter(|&d| d != me)
        .flat_map(|d| {
            TAGS.iter()
                .flat_map(move |&t| std::iter::repeat_n((d, t), PER_PAIR))
        })
        .collect();
    let mut next_seq = vec![[0usize; TAGS.len()]; n];
    let mut handles = Vec::new();
    while !pending.is_empty() {
        let k = (rng.uniform() * pending.len() as f64) as usize;
        let (d, t) = pending.swap_remove(k.min(pending.len() - 1));
        let ti = TAGS.iter().position(|&x| x == t).unwrap();
        let seq = next_seq[d][ti];
        next_seq[d][ti] += 1;
        handles.push(c.send_nonblocking(d, t, payload(me, t, seq)).unwrap());
    }

    let mut wanted: Vec<(usize, u32)> = (0..n)
        .filter(|&s| s != me)
        .flat_map(|s| {
            TAGS.iter()
                .flat_map(move |&t| std::iter::repeat_n((s, t), PER_PAIR))
        })
        .collect();
    let mut seen = vec![[0usize; TAGS.len()]; n];
    let mut ok = true;
    while !wanted.is_empty() {
        let k = (rng.uniform() * wanted.len() as f64) as usize;
        let (s, t) = wanted.swap_remove(k.min(wanted.len() - 1));
        let env = c.receive(Source::Rank(s), t).unwrap();
        let ti = TAGS.iter().position(|&x| x == t).unwrap();
        ok &= env.source == s && env.tag == t && env.dest == me;
        ok &= field(&env.payload, 0) == s && field(&env.payload, 1) == t as usize;
        ok &= field(&env.payload, 2) == seen[s][ti];
        ok &= env.payload == payload(s, t, seen[s][ti]);
        seen[s][ti] += 1;
    }
    wait_all(handles).unwrap();
    barrier(c).unwrap();
    ok
}

#[test]
fn in_process_keeps_per_source_tag_order() {
    for seed in 0..5 {
        let out = run_in_process(5, |c| exercise(c, seed));
        assert!(out.iter().all(|&ok| ok), "seed {seed}");
    }
}

#[test]
fn tcp_keeps_per_source_tag_order() {
    for seed in 0..2 {
        let out = run_tcp_local(4, |c| exercise(c, seed)).unwrap();
        assert!(out.iter().all(|&ok| ok), "seed {seed}");
    }
}

#[test]
fn any_source_receive_is_fifo_per_sender() {
    let out = run_in_process(4, |c| {
        let me = c.rank();
        if me != 0 {
            for seq in 0..50 {
                c.send(0, 7, payload(me, 7, seq)).unwrap();
            }
            return true;
        }
        let mut last = [None::<usize>; 4];
        for _ in 0..150 {
            let env = c.receive(Source::Any, 7).unwrap();
            let seq = field(&env.payload, 2);
            if let Some(prev) = last[env.source] {
                if seq != prev + 1 {
                    return false;
                }
            } else if seq != 0 {
                return false;
            }
            last[env.source] = Some(seq);
        }
        true
    });
    assert!(out.iter().all(|&ok| ok));
}

#[test]
fn collectives_agree_across_backends() {
    let f = |c: &mut dyn Communicator| {
        let r = c.rank() as f64;
        let sums = allreduce_sum(c, &[r, 0.1 * r, 1e16 + r]).unwrap();
        let ranks = allgather_u64(c, c.rank() as u64 * 3).unwrap();
        (sums, ranks)
    };
    let a = run_in_process(6, |c| f(c));
    let b = run_tcp_local(6, |c| f(c)).unwrap();
    assert_eq!(a, b);
    assert!(a.iter().all(|x| x == &a[0]));
    let mut want = 0.0;
    for r in 0..6 {
        want += 0.1 * r as f64;
    }
    assert_eq!(a[0].0[1], want);
    assert_eq!(a[0].1, vec![0, 3, 6, 9, 12, 15]);
}
