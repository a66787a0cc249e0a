//! Single-file model checkpoints.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! "NSCK" | version u32 | spec_len u32 | spec JSON
//! tensor_count u32
//! per tensor: name_len u16 | name | ndim u8 | dims u32 * ndim | f64 data
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{LayerSpec, NetSpec, Result, SnnError, SpikingNet};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"NSCK";
const VERSION: u32 = 1;

fn tensor_dims(net: &SpikingNet, l: usize) -> (Vec<u32>, Vec<u32>) {
    let layer = &net.layers[l];
    let w = match layer.spec {
        LayerSpec::Conv { out_channels, kernel, .. } => {
            vec![out_channels as u32, layer.input.c as u32, kernel as u32, kernel as u32]
        }
        LayerSpec::Dense { out } => vec![out as u32, layer.input.len() as u32],
    };
    (w, vec![layer.bias.len() as u32])
}

pub fn write_checkpoint<W: Write>(mut w: W, net: &SpikingNet) -> Result<()> {
    let spec = serde_json::to_vec(&net.spec).map_err(|e| SnnError::Checkpoint(e.to_string()))?;
    w.write_all(CHECKPOINT_MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(spec.len() as u32).to_le_bytes())?;
    w.write_all(&spec)?;
    w.write_all(&(2 * net.layers.len() as u32).to_le_bytes())?;
    for (l, layer) in net.layers.iter().enumerate() {
        let (wd, bd) = tensor_dims(net, l);
        for (name, dims, data) in [
            (format!("layer{l}.weight"), wd, &layer.weights),
            (format!("layer{l}.bias"), bd, &layer.bias),
        ] {
            w.write_all(&(name.len() as u16).to_le_bytes())?;
            w.write_all(name.as_bytes())?;
            w.write_all(&[dims.len() as u8])?;
            for d in &dims {
                w.write_all(&d.to_le_bytes())?;
            }
            for v in data.iter() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
    }
    Ok(())
}

fn read_array<const N: usize, R: Read>(r: &mut R) -> Result<[u8; N]> {
    let mut b = [0u8; N];
    r.read_exact(&mut b)?;
    Ok(b)
}

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<SpikingNet> {
    let bad = |m: String| SnnError::Checkpoint(m);
    if &read_array::<4, _>(&mut r)? != CHECKPOINT_MAGIC {
        return Err(bad("bad magic".into()));
    }
    let version = u32::from_le_bytes(read_array(&mut r)?);
    if version != VERSION {
        return Err(bad(format!("unsupported version {version}")));
    }
    let spec_len = u32::from_le_bytes(read_array(&mut r)?) as usize;
    let mut spec = vec![0u8; spec_len];
    r.read_exact(&mut spec)?;
    let spec: NetSpec = serde_json::from_slice(&spec).map_err(|e| bad(e.to_string()))?;
    let mut net = SpikingNet::zeros(&spec)?;
    let count = u32::from_le_bytes(read_array(&mut r)?) as usize;
    if count != 2 * net.layers.len() {
        return Err(bad(format!("expected {} tensors, found {count}", 2 * net.layers.len())));
    }
    for i in 0..count {
        let l = i / 2;
        let name_len = u16::from_le_bytes(read_array(&mut r)?) as usize;
        let mut name = vec![0u8; name_len];
        r.read_exact(&mut name)?;
        let name = String::from_utf8(name).map_err(|e| bad(e.to_string()))?;
        let ndim = read_array::<1, _>(&mut r)?[0] as usize;
        let mut dims = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            dims.push(u32::from_le_bytes(read_array(&mut r)?));
        }
        let (wd, bd) = tensor_dims(&net, l);
        let (want_name, want_dims) = if i % 2 == 0 {
            (format!("layer{l}.weight"), wd)
        } else {
            (format!("layer{l}.bias"), bd)
        };
        if name != want_name || dims != want_dims {
            return Err(bad(format!("tensor {name} {dims:?} does not match {want_name} {want_dims:?}")));
        }
        let layer = &mut net.layers[l];
        let dst = if i % 2 == 0 { &mut layer.weights } else { &mut layer.bias };
        for v in dst.iter_mut() {
            *v = f64::from_le_bytes(read_array(&mut r)?);
        }
    }
    let mut rest = Vec::new();
    r.read_to_end(&mut rest)?;
    if !rest.is_empty() {
        return Err(bad(format!("{} trailing bytes", rest.len())));
    }
    Ok(net)
}

pub fn save_checkpoint(path: &Path, net: &SpikingNet) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_checkpoint(&mut w, net)?;
    w.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<SpikingNet> {
    read_checkpoint(BufReader::new(File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn round_trip_is_bit_exact(seed in any::<u64>(), bias in -3.0f64..3.0) {
            let mut net = SpikingNet::from_spec(&NetSpec::default(), seed).unwrap();
            net.layers[0].bias.fill(bias);
            let mut buf = Vec::new();
            write_checkpoint(&mut buf, &net).unwrap();
            let back = read_checkpoint(&buf[..]).unwrap();
            prop_assert_eq!(back, net);
        }
    }

    #[test]
    fn rejects_corruption() {
        let net = SpikingNet::from_spec(&NetSpec::default(), 1).unwrap();
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &net).unwrap();
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(read_checkpoint(&bad[..]).is_err());
        assert!(read_checkpoint(&buf[..buf.len() - 3]).is_err());
        let mut long = buf.clone();
        long.push(0);
        assert!(read_checkpoint(&long[..]).is_err());
    }
}
