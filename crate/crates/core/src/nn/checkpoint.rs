//! Versioned little-endian binary checkpoints.
//!
//! Layout: magic, format version, input dims, layer descriptors, parameter
//! tensors, optimizer hyperparameters and moments, epoch, best checkpoint.

use std::path::Path;

use super::adam::{AdamConfig, AdamState};
use super::layers::{
    Activation, ConvLayer, DenseLayer, FusedMbConvBlock, Layer, MbConvBlock, Padding, PoolSpec,
    SeBlock,
};
use super::net::LayerStack;
use super::train::{Checkpoint, TrainState};
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"KNEEAUG\0";
pub const FORMAT_VERSION: u32 = 1;

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn usize(&mut self, v: usize) {
        self.u64(v as u64);
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn tensor(&mut self, v: &[f64]) {
        self.usize(v.len());
        v.iter().for_each(|&x| self.f64(x));
    }
    fn conv(&mut self, c: &ConvLayer) {
        for v in [
            c.in_channels,
            c.out_channels,
            c.kernel.0,
            c.kernel.1,
            c.stride,
            c.groups,
        ] {
            self.usize(v);
        }
        self.u8(match c.padding {
            Padding::Valid => 0,
            Padding::Same => 1,
        });
        self.u8(c.activation.tag());
    }
    fn se(&mut self, s: &SeBlock) {
        self.usize(s.channels);
        self.usize(s.reduce.outputs);
    }
    fn layer(&mut self, l: &Layer) {
        match l {
            Layer::Conv(c) => {
                self.u8(0);
                self.conv(c);
            }
            Layer::Pool(p) => {
                self.u8(1);
                self.usize(p.window);
                self.usize(p.stride);
            }
            Layer::Se(s) => {
                self.u8(2);
                self.se(s);
            }
            Layer::MbConv(b) => {
                self.u8(3);
                self.conv(&b.expand);
                self.conv(&b.depthwise);
                self.se(&b.se);
                self.conv(&b.project);
                self.u8(b.skip as u8);
            }
            Layer::FusedMbConv(b) => {
                self.u8(4);
                self.conv(&b.fused);
                self.se(&b.se);
                self.conv(&b.project);
                self.u8(b.skip as u8);
            }
            Layer::Flatten => self.u8(5),
            Layer::Dense(d) => {
                self.u8(6);
                self.usize(d.inputs);
                self.usize(d.outputs);
                self.u8(d.activation.tag());
            }
        }
    }
    fn net(&mut self, net: &LayerStack) {
        let (c, h, w) = net.input_dims();
        [c, h, w].into_iter().for_each(|v| self.usize(v));
        self.usize(net.layers().len());
        net.layers().iter().for_each(|l| self.layer(l));
        let params = net.params();
        self.usize(params.len());
        params.iter().for_each(|p| self.tensor(p));
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

fn corrupt(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| corrupt("truncated"))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn usize(&mut self) -> Result<usize> {
        usize::try_from(self.u64()?).map_err(|_| corrupt("size overflow"))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn tensor(&mut self) -> Result<Vec<f64>> {
        let n = self.usize()?;
        if n > (self.buf.len() - self.pos) / 8 {
            return Err(corrupt("tensor length exceeds file"));
        }
        (0..n).map(|_| self.f64()).collect()
    }
    fn activation(&mut self) -> Result<Activation> {
        let t = self.u8()?;
        Activation::from_tag(t).ok_or_else(|| corrupt(format!("unknown activation tag {t}")))
    }
    fn flag(&mut self) -> Result<bool> {
        match self.u8()? {
            0 => Ok(false),
            1 => Ok(true),
            t => Err(corrupt(format!("bad flag {t}"))),
        }
    }
    fn conv(&mut self) -> Result<ConvLayer> {
        let v: Vec<usize> = (0..6).map(|_| self.usize()).collect::<Result<_>>()?;
        let padding = match self.u8()? {
            0 => Padding::Valid,
            1 => Padding::Same,
            t => return Err(corrupt(format!("unknown padding tag {t}"))),
        };
        let act = self.activation()?;
        ConvLayer::new(v[0], v[1], (v[2], v[3]), v[4], padding, v[5], act)
    }
    fn se(&mut self) -> Result<SeBlock> {
        let channels = self.usize()?;
        let hidden = self.usize()?;
        Ok(SeBlock {
            channels,
            reduce: DenseLayer::new(channels, hidden, Activation::Relu)?,
            expand: DenseLayer::new(hidden, channels, Activation::Sigmoid)?,
        })
    }
    fn layer(&mut self) -> Result<Layer> {
        Ok(match self.u8()? {
            0 => Layer::Conv(self.conv()?),
            1 => Layer::Pool(PoolSpec::new(self.usize()?, self.usize()?)?),
            2 => Layer::Se(self.se()?),
            3 => Layer::MbConv(MbConvBlock {
                expand: self.conv()?,
                depthwise: self.conv()?,
                se: self.se()?,
                project: self.conv()?,
                skip: self.flag()?,
            }),
            4 => Layer::FusedMbConv(FusedMbConvBlock {
                fused: self.conv()?,
                se: self.se()?,
                project: self.conv()?,
                skip: self.flag()?,
            }),
            5 => Layer::Flatten,
            6 => Layer::Dense(DenseLayer::new(
                self.usize()?,
                self.usize()?,
                self.activation()?,
            )?),
            t => return Err(corrupt(format!("unknown layer tag {t}"))),
        })
    }
    fn tensors(&mut self) -> Result<Vec<Vec<f64>>> {
        let n = self.usize()?;
        if n > self.buf.len() {
            return Err(corrupt("tensor count exceeds file"));
        }
        (0..n).map(|_| self.tensor()).collect()
    }
    fn net(&mut self) -> Result<LayerStack> {
        let dims = (self.usize()?, self.usize()?, self.usize()?);
        let n = self.usize()?;
        if n > self.buf.len() {
            return Err(corrupt("layer count exceeds file"));
        }
        let layers = (0..n).map(|_| self.layer()).collect::<Result<Vec<_>>>()?;
        let mut net = LayerStack::new(dims, layers)
            .map_err(|e| corrupt(format!("invalid architecture: {e}")))?;
        let tensors = self.tensors()?;
        fill(&mut net, tensors)?;
        Ok(net)
    }
}

fn fill(net: &mut LayerStack, tensors: Vec<Vec<f64>>) -> Result<()> {
    let mut params = net.params_mut();
    if params.len() != tensors.len() || params.iter().zip(&tensors).any(|(p, t)| p.len() != t.len())
    {
        return Err(corrupt("parameter tensors do not match the architecture"));
    }
    for (p, t) in params.iter_mut().zip(tensors) {
        **p = t;
    }
    Ok(())
}

pub fn encode_state(state: &TrainState) -> Vec<u8> {
    let mut w = Writer(Vec::new());
    w.0.extend_from_slice(MAGIC);
    w.u32(FORMAT_VERSION);
    w.net(&state.net);
    let o = &state.optimizer;
    [o.learning_rate, o.beta1, o.beta2, o.epsilon]
        .into_iter()
        .for_each(|v| w.f64(v));
    w.u64(state.adam.step);
    w.usize(state.adam.m.len());
    state
        .adam
        .m
        .iter()
        .chain(&state.adam.v)
        .for_each(|t| w.tensor(t));
    w.u32(state.epoch);
    match &state.best {
        None => w.u8(0),
        Some(b) => {
            w.u8(1);
            w.u32(b.epoch);
            w.f64(b.val_loss);
            let params = b.net.params();
            w.usize(params.len());
            params.iter().for_each(|p| w.tensor(p));
        }
    }
    w.0
}

pub fn decode_state(buf: &[u8]) -> Result<TrainState> {
    let mut r = Reader { buf, pos: 0 };
    if r.take(MAGIC.len()).ok() != Some(MAGIC.as_slice()) {
        return Err(corrupt("not a checkpoint file"));
    }
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return Err(corrupt(format!("unsupported format version {version}")));
    }
    let net = r.net()?;
    let optimizer = AdamConfig {
        learning_rate: r.f64()?,
        beta1: r.f64()?,
        beta2: r.f64()?,
        epsilon: r.f64()?,
    };
    let step = r.u64()?;
    let n = r.usize()?;
    if n != net.params().len() {
        return Err(corrupt("optimizer moments do not match the architecture"));
    }
    let m = (0..n).map(|_| r.tensor()).collect::<Result<Vec<_>>>()?;
    let v = (0..n).map(|_| r.tensor()).collect::<Result<Vec<_>>>()?;
    let aligned = |t: &[Vec<f64>]| t.iter().zip(net.params()).all(|(a, p)| a.len() == p.len());
    if !aligned(&m) || !aligned(&v) {
        return Err(corrupt("optimizer moments do not match the architecture"));
    }
    let epoch = r.u32()?;
    let best = if r.flag()? {
        let epoch = r.u32()?;
        let val_loss = r.f64()?;
        let mut best_net = net.clone();
        fill(&mut best_net, r.tensors()?)?;
        Some(Checkpoint {
            net: best_net,
            epoch,
            val_loss,
        })
    } else {
        None
    };
    if r.pos != buf.len() {
        return Err(corrupt("trailing bytes"));
    }
    Ok(TrainState {
        net,
        adam: AdamState { m, v, step },
        optimizer,
        epoch,
        best,
    })
}

pub fn save_checkpoint(path: &Path, state: &TrainState) -> Result<()> {
    std::fs::write(path, encode_state(state)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<TrainState> {
    let buf = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_state(&buf)
}
