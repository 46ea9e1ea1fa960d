use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crowdsense::commitment::{commit, commit_random, Opening};
use crowdsense::group::GroupParams;
use crowdsense::sigma::{
    nn, prove_cm, prove_mbs, prove_nn, verify_cm, verify_mbs, verify_nn, MaskMode, ProofError,
};

fn rng(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

fn toy() -> GroupParams {
    GroupParams::generate(5, b"sigma-tests").unwrap()
}

#[test]
fn range_proof_exists_exactly_for_in_range_values() {
    let pp = toy();
    let order: u64 = pp.p().try_into().unwrap();
    let mut r = rng(1);
    for x in 0..order {
        for mask in 0..order {
            let o = Opening::new(pp.scalar(x), pp.scalar(mask));
            let c = commit(&pp, &o.x, &o.r);
            match prove_nn(&pp, &o, &c, 3, b"ctx", &mut r) {
                Ok(proof) => {
                    assert!(x < 8);
                    assert!(verify_nn(&pp, &proof, &c, 3, b"ctx"));
                    assert!(!verify_nn(&pp, &proof, &c, 2, b"ctx"));
                }
                Err(e) => {
                    assert!(x >= 8, "x = {x}");
                    assert_eq!(e, ProofError::OutOfRange(3));
                }
            }
        }
    }
    let o = Opening::new(pp.scalar(1), pp.scalar(1));
    let c = commit(&pp, &o.x, &o.r);
    assert_eq!(prove_nn(&pp, &o, &c, 4, b"", &mut r), Err(ProofError::WidthTooLarge(4)));
}

#[test]
fn every_single_field_mutation_of_a_range_proof_fails() {
    let pp = GroupParams::generate(64, b"sigma-tests").unwrap();
    let mut r = rng(2);
    let (c, o) = commit_random(&pp, &pp.scalar(200), &mut r);
    let proof = prove_nn(&pp, &o, &c, 8, b"ctx", &mut r).unwrap();
    assert!(verify_nn(&pp, &proof, &c, 8, b"ctx"));
    let one = pp.scalar(1);
    let bump = |s: &crowdsense::group::Scalar| pp.scalar_add(s, &one);
    let nudge = |e: &crowdsense::commitment::Commitment| {
        crowdsense::commitment::Commitment(pp.group_mul(e.element(), pp.g()))
    };

    let mut variants: Vec<nn::NnProof> = Vec::new();
    let mut p = proof.clone();
    p.z_r = bump(&p.z_r);
    variants.push(p);
    let mut p = proof.clone();
    p.a0 = nudge(&p.a0);
    variants.push(p);
    for i in 0..8 {
        let mut p = proof.clone();
        p.bit_commitments[i] = nudge(&p.bit_commitments[i]);
        variants.push(p);
        for k in 0..2 {
            for field in 0..4 {
                let mut p = proof.clone();
                let b = &mut p.bit_proofs[i].branches[k];
                match field {
                    0 => b.a = nudge(&b.a),
                    1 => b.z_x = bump(&b.z_x),
                    2 => b.beta = bump(&b.beta),
                    _ => b.z_r = bump(&b.z_r),
                }
                variants.push(p);
            }
        }
    }
    let mut p = proof.clone();
    p.bit_commitments.pop();
    p.bit_proofs.pop();
    variants.push(p);
    for (i, v) in variants.iter().enumerate() {
        assert!(!verify_nn(&pp, v, &c, 8, b"ctx"), "variant {i} verified");
    }
    assert!(!verify_nn(&pp, &proof, &c, 8, b"other"));
    assert!(!verify_nn(&pp, &proof, &nudge(&c), 8, b"ctx"));
}

#[test]
fn proofs_are_bound_to_statement_and_context() {
    let pp = GroupParams::generate(64, b"sigma-tests").unwrap();
    let mut r = rng(3);
    let (c, o) = commit_random(&pp, &pp.scalar(4), &mut r);
    let (c2, _) = commit_random(&pp, &pp.scalar(4), &mut r);

    for mode in [MaskMode::Hidden, MaskMode::Known] {
        let proof = prove_cm(&pp, &o, &c, mode, b"a", &mut r).unwrap();
        let mask = (mode == MaskMode::Known).then_some(&o.r);
        assert!(verify_cm(&pp, &proof, &c, mask, b"a"));
        assert!(!verify_cm(&pp, &proof, &c, mask, b"b"));
        assert!(!verify_cm(&pp, &proof, &c2, mask, b"a"));
    }
    let wrong = Opening::new(pp.scalar(5), o.r.clone());
    assert_eq!(prove_cm(&pp, &wrong, &c, MaskMode::Hidden, b"a", &mut r), Err(ProofError::InvalidWitness));

    let set = [pp.scalar(1), pp.scalar(4), pp.scalar(9)];
    let proof = prove_mbs(&pp, &o, &c, &set, b"a", &mut r).unwrap();
    assert!(verify_mbs(&pp, &proof, &c, &set, b"a"));
    assert!(!verify_mbs(&pp, &proof, &c, &set, b"b"));
    assert!(!verify_mbs(&pp, &proof, &c, &[pp.scalar(1), pp.scalar(5), pp.scalar(9)], b"a"));
    assert!(!verify_mbs(&pp, &proof, &c, &[set[1].clone(), set[0].clone(), set[2].clone()], b"a"));
    assert_eq!(
        prove_mbs(&pp, &o, &c, &[pp.scalar(1), pp.scalar(2)], b"a", &mut r),
        Err(ProofError::NotMember)
    );
}
