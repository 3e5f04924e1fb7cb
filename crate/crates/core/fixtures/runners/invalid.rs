pub struct Heap {
    items: Vec<u32>,
}

impl Heap {
    pub fn push(&mut self, x: u32) {
        self.items.push(x)
    }

    pub fn len(&self) -> usize {
        self.items.len(
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn push_then_len() {
        let mut h = Heap { items: Vec::new() };
        h.push(3);
        assert_eq!(h.len(), 1);
    }
}
