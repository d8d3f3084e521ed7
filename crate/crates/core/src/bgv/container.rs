//! Versioned binary container for ciphertexts and secret keys.
//!
//! Layout: 4-byte magic, `u16` version, `u32` header length, a JSON header
//! (moduli as decimal strings), then every limb as a `u32` length followed by
//! little-endian `u64` residues. All integers are little-endian.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::{Bgv, Ciphertext, KeyMaterial, Lineage};
use crate::error::{Error, Result};
use crate::noise::NoiseEstimate;
use crate::ring::rns::RnsPoly;

pub const MAGIC: [u8; 4] = *b"BGVL";
pub const VERSION: u16 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    kind: String,
    n: usize,
    t: u64,
    level: usize,
    moduli: Vec<String>,
    components: usize,
    scale: u64,
    lineage: Option<Lineage>,
    noise: Option<NoiseEstimate>,
}

fn write_limbs<W: Write>(w: &mut W, limbs: &[Vec<u64>]) -> Result<()> {
    for limb in limbs {
        w.write_all(&(limb.len() as u32).to_le_bytes())?;
        for &x in limb {
            w.write_all(&x.to_le_bytes())?;
        }
    }
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_limb<R: Read>(r: &mut R, n: usize, modulus: u64) -> Result<Vec<u64>> {
    let len = read_u32(r)? as usize;
    if len != n {
        return Err(Error::Format(format!("limb length {len}, expected {n}")));
    }
    let mut buf = vec![0u8; 8 * n];
    r.read_exact(&mut buf)?;
    let limb: Vec<u64> = buf.chunks_exact(8).map(|c| u64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
    if limb.iter().any(|&x| x >= modulus) {
        return Err(Error::Format(format!("residue not reduced modulo {modulus}")));
    }
    Ok(limb)
}

fn write_header<W: Write>(w: &mut W, h: &Header) -> Result<()> {
    let json = serde_json::to_vec(h)?;
    w.write_all(&MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(json.len() as u32).to_le_bytes())?;
    w.write_all(&json)?;
    Ok(())
}

fn read_header<R: Read>(r: &mut R) -> Result<Header> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if magic != MAGIC {
        return Err(Error::Format("bad magic".into()));
    }
    let mut v = [0u8; 2];
    r.read_exact(&mut v)?;
    let version = u16::from_le_bytes(v);
    if version != VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let len = read_u32(r)? as usize;
    let mut json = vec![0u8; len];
    r.read_exact(&mut json)?;
    Ok(serde_json::from_slice(&json)?)
}

fn check_moduli(bgv: &Bgv, h: &Header) -> Result<Vec<u64>> {
    if h.n != bgv.n() || h.t != bgv.t() || h.level > bgv.top_level() {
        return Err(Error::Format(format!(
            "container for n={} t={} level {} does not match scheme",
            h.n, h.t, h.level
        )));
    }
    let expect = bgv.level_basis(h.level).primes();
    let got = h
        .moduli
        .iter()
        .map(|s| s.parse::<u64>().map_err(|e| Error::Format(format!("modulus {s:?}: {e}"))))
        .collect::<Result<Vec<_>>>()?;
    if got != expect {
        return Err(Error::Format("moduli do not match the scheme's level basis".into()));
    }
    Ok(got)
}

pub fn write_ciphertext<W: Write>(w: &mut W, bgv: &Bgv, c: &Ciphertext) -> Result<()> {
    let h = Header {
        kind: "ciphertext".into(),
        n: bgv.n(),
        t: bgv.t(),
        level: c.level,
        moduli: bgv.level_basis(c.level).primes().iter().map(u64::to_string).collect(),
        components: c.parts.len(),
        scale: c.scale,
        lineage: Some(c.lineage),
        noise: Some(c.noise.clone()),
    };
    write_header(w, &h)?;
    for p in &c.parts {
        write_limbs(w, p.limbs())?;
    }
    Ok(())
}

pub fn read_ciphertext<R: Read>(r: &mut R, bgv: &Bgv) -> Result<Ciphertext> {
    let h = read_header(r)?;
    if h.kind != "ciphertext" || !(2..=3).contains(&h.components) {
        return Err(Error::Format(format!("expected a ciphertext, found {} with {} parts", h.kind, h.components)));
    }
    let moduli = check_moduli(bgv, &h)?;
    let basis = bgv.level_basis(h.level);
    let mut parts = Vec::with_capacity(h.components);
    for _ in 0..h.components {
        let limbs = moduli.iter().map(|&p| read_limb(r, h.n, p)).collect::<Result<Vec<_>>>()?;
        parts.push(RnsPoly::from_limbs(basis, limbs));
    }
    let noise = h.noise.ok_or_else(|| Error::Format("ciphertext header lacks a noise estimate".into()))?;
    Ok(Ciphertext { parts, level: h.level, scale: h.scale, lineage: h.lineage.unwrap_or(Lineage::Fresh), noise })
}

/// Writes the secret `s` as one polynomial over the top-level basis.
pub fn write_secret_key<W: Write>(w: &mut W, bgv: &Bgv, key: &KeyMaterial) -> Result<()> {
    let level = bgv.top_level();
    let h = Header {
        kind: "secret_key".into(),
        n: bgv.n(),
        t: bgv.t(),
        level,
        moduli: bgv.level_basis(level).primes().iter().map(u64::to_string).collect(),
        components: 1,
        scale: 1,
        lineage: None,
        noise: None,
    };
    write_header(w, &h)?;
    write_limbs(w, RnsPoly::from_signed(bgv.level_basis(level), key.secret()).limbs())
}

/// Reads a secret written by [`write_secret_key`] back to centered coefficients.
pub fn read_secret_key<R: Read>(r: &mut R, bgv: &Bgv) -> Result<Vec<i64>> {
    let h = read_header(r)?;
    if h.kind != "secret_key" {
        return Err(Error::Format(format!("expected a secret key, found {}", h.kind)));
    }
    let moduli = check_moduli(bgv, &h)?;
    let limb = read_limb(r, h.n, moduli[0])?;
    for &p in &moduli[1..] {
        read_limb(r, h.n, p)?;
    }
    let z = crate::arith::Zp::new(moduli[0]);
    Ok(limb.into_iter().map(|x| z.center(x)).collect())
}

#[cfg(test)]
mod tests {
    use super::super::tests::toy_chain;
    use super::super::SchemeParams;
    use super::*;
    use crate::ring::Sampler;

    #[test]
    fn ciphertext_round_trip() {
        let bgv = Bgv::new(SchemeParams::standard(8, 17, toy_chain(8, 17, 3, 30))).unwrap();
        let mut s = Sampler::new(1);
        let key = bgv.keygen(&mut s);
        let m = vec![1, -2, 3, 0, 0, 8, -8, 4];
        let c = bgv.mod_switch(&bgv.encrypt_coeffs(&m, &key, &mut s).unwrap(), 1).unwrap();
        let mut buf = Vec::new();
        write_ciphertext(&mut buf, &bgv, &c).unwrap();
        assert_eq!(&buf[..4], b"BGVL");
        let back = read_ciphertext(&mut buf.as_slice(), &bgv).unwrap();
        assert_eq!(back.level(), 1);
        assert_eq!(bgv.decrypt_coeffs(&back, &key), m);
        buf[0] = b'X';
        assert!(read_ciphertext(&mut buf.as_slice(), &bgv).is_err());
    }

    #[test]
    fn secret_key_round_trip() {
        let bgv = Bgv::new(SchemeParams::standard(8, 17, toy_chain(8, 17, 2, 30))).unwrap();
        let key = bgv.keygen(&mut Sampler::new(2));
        let mut buf = Vec::new();
        write_secret_key(&mut buf, &bgv, &key).unwrap();
        assert_eq!(read_secret_key(&mut buf.as_slice(), &bgv).unwrap(), key.secret());
        assert!(read_ciphertext(&mut buf.as_slice(), &bgv).is_err());
    }
}
