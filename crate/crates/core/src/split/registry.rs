use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::nn::{join, ParamSet, Tensor};
use crate::pipeline::MaskHead;
use crate::scalar::Scalar;
use crate::types::ClassLabel;

/// Mask head with a single output plane, owned by one class.
#[derive(Debug, Clone, PartialEq)]
pub struct SingleClassMaskHead<T> {
    pub class: ClassLabel,
    pub head: MaskHead<T>,
}

impl<T: Scalar> SingleClassMaskHead<T> {
    pub fn new(class: ClassLabel, head: MaskHead<T>) -> Result<Self> {
        if head.outputs() != 1 {
            return Err(Error::IncompatibleModel(format!(
                "head for class {class} has {} output channels",
                head.outputs()
            )));
        }
        Ok(SingleClassMaskHead { class, head })
    }

    /// Parameter prefix of this head inside a registry.
    pub fn prefix(class: ClassLabel) -> String {
        format!("class_{:02}", class.0)
    }
}

impl<T: Scalar> ParamSet<T> for SingleClassMaskHead<T> {
    fn visit<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Tensor<T>)>) {
        self.head.visit(prefix, out);
    }

    fn visit_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Tensor<T>)>) {
        self.head.visit_mut(prefix, out);
    }
}

/// One independent single-class head per foreground class. Each head owns
/// its tensors, so no two entries can share storage.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadRegistry<T> {
    num_classes: usize,
    heads: BTreeMap<ClassLabel, SingleClassMaskHead<T>>,
}

impl<T: Scalar> HeadRegistry<T> {
    pub fn new(num_classes: usize, heads: Vec<SingleClassMaskHead<T>>) -> Result<Self> {
        let mut map = BTreeMap::new();
        for h in heads {
            if h.class.is_background() || h.class.index() > num_classes {
                return Err(Error::InvalidClass(format!("head for class {} outside catalog", h.class)));
            }
            if map.insert(h.class, h).is_some() {
                return Err(Error::InvalidArgument("duplicate registry head".into()));
            }
        }
        let reg = HeadRegistry { num_classes, heads: map };
        reg.check_complete()?;
        Ok(reg)
    }

    pub fn check_complete(&self) -> Result<()> {
        for c in 1..=self.num_classes as u32 {
            if !self.heads.contains_key(&ClassLabel(c)) {
                return Err(Error::RegistryIncomplete(c));
            }
        }
        Ok(())
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn len(&self) -> usize {
        self.heads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heads.is_empty()
    }

    pub fn get(&self, class: ClassLabel) -> Result<&SingleClassMaskHead<T>> {
        self.heads.get(&class).ok_or(Error::RegistryIncomplete(class.0))
    }

    pub fn get_mut(&mut self, class: ClassLabel) -> Result<&mut SingleClassMaskHead<T>> {
        self.heads.get_mut(&class).ok_or(Error::RegistryIncomplete(class.0))
    }

    /// Replaces one head, keeping every other entry untouched.
    pub fn replace(&mut self, head: SingleClassMaskHead<T>) -> Result<()> {
        let slot = self.get_mut(head.class)?;
        *slot = head;
        Ok(())
    }

    pub fn remove(&mut self, class: ClassLabel) -> Option<SingleClassMaskHead<T>> {
        self.heads.remove(&class)
    }

    pub fn heads(&self) -> impl Iterator<Item = &SingleClassMaskHead<T>> {
        self.heads.values()
    }

    pub fn classes(&self) -> impl Iterator<Item = ClassLabel> + '_ {
        self.heads.keys().copied()
    }

    /// Parameter prefix of a class head under `registry_prefix`.
    pub fn head_prefix(registry_prefix: &str, class: ClassLabel) -> String {
        join(registry_prefix, &SingleClassMaskHead::<T>::prefix(class))
    }
}

impl<T: Scalar> ParamSet<T> for HeadRegistry<T> {
    fn visit<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Tensor<T>)>) {
        for (c, h) in &self.heads {
            h.visit(&join(prefix, &SingleClassMaskHead::<T>::prefix(*c)), out);
        }
    }

    fn visit_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Tensor<T>)>) {
        for (c, h) in self.heads.iter_mut() {
            h.visit_mut(&join(prefix, &SingleClassMaskHead::<T>::prefix(*c)), out);
        }
    }
}
