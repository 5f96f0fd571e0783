//! Byte-level tokenizer with four special ids.

pub const BOS: u32 = 256;
pub const EOS: u32 = 257;
pub const PAD: u32 = 258;
pub const SEP: u32 = 259;
pub const VOCAB_SIZE: usize = 260;

#[derive(Debug, Clone, Copy, Default)]
pub struct ByteTokenizer;

impl ByteTokenizer {
    pub fn vocab_size(&self) -> usize {
        VOCAB_SIZE
    }

    pub fn encode(&self, text: &str) -> Vec<u32> {
        text.bytes().map(u32::from).collect()
    }

    /// Drops special ids; invalid UTF-8 is replaced.
    pub fn decode(&self, ids: &[u32]) -> String {
        let bytes: Vec<u8> = ids.iter().filter(|&&i| i < 256).map(|&i| i as u8).collect();
        String::from_utf8_lossy(&bytes).into_owned()
    }

    /// `BOS question SEP`, the generation prompt.
    pub fn encode_prompt(&self, question: &str) -> Vec<u32> {
        let mut ids = Vec::with_capacity(question.len() + 2);
        ids.push(BOS);
        ids.extend(self.encode(question));
        ids.push(SEP);
        ids
    }

    /// `BOS question SEP answer EOS`, truncated to `cutoff` ids. The mask marks
    /// answer bytes and the closing EOS.
    pub fn encode_pair(&self, question: &str, answer: &str, cutoff: usize) -> (Vec<u32>, Vec<bool>) {
        let mut ids = self.encode_prompt(question);
        let n_prompt = ids.len();
        ids.extend(self.encode(answer));
        ids.push(EOS);
        let mut mask: Vec<bool> = (0..ids.len()).map(|i| i >= n_prompt).collect();
        ids.truncate(cutoff);
        mask.truncate(cutoff);
        (ids, mask)
    }
}
