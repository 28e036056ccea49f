//! System configuration: the fixed entity universe, declared use attributes,
//! the policy rule and the update procedures.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use thiserror::Error;

use super::value::{EntityId, RawValue, Value, ValueType};
use super::world::{Entity, EntityKind, Use, UseKey, UseStatus, World};
use crate::policy::{self, PolicyError, PolicyRule, UpdateProc, UpdateSpec};

/// Upper bound on the logical clock when it participates in state identity.
pub const DEFAULT_TICK_BOUND: u64 = 32;

/// Largest candidate universe the packed action labels can address.
pub const MAX_CANDIDATES: usize = 1 << 24;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ModelKind {
    Pre,
    Ongoing,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Pre => "pre",
            ModelKind::Ongoing => "ongoing",
        }
    }

    /// Statuses a use may legitimately finish in.
    pub fn final_statuses(self) -> [UseStatus; 2] {
        match self {
            ModelKind::Pre => [UseStatus::Completed, UseStatus::Denied],
            ModelKind::Ongoing => [UseStatus::Completed, UseStatus::Stopped],
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "pre" => Ok(ModelKind::Pre),
            "ongoing" => Ok(ModelKind::Ongoing),
            other => Err(format!(
                "unknown model kind '{other}' (expected pre or ongoing)"
            )),
        }
    }
}

/// How `choose` resolves a selection with several matches.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ChooseMode {
    /// Pick the match with the smallest id.
    #[default]
    SmallestId,
    /// Report ambiguity as an evaluation error.
    Strict,
}

/// A finite, homogeneously typed set of attribute values.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Domain {
    values: Vec<Value>,
}

impl Domain {
    pub fn int_range(lo: i64, hi: i64) -> Domain {
        Domain {
            values: (lo..=hi).map(Value::Int).collect(),
        }
    }

    pub fn values(&self) -> &[Value] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn contains(&self, v: &Value) -> bool {
        self.index_of(v).is_some()
    }

    pub fn index_of(&self, v: &Value) -> Option<usize> {
        self.values.binary_search_by(|x| x.canonical_cmp(v)).ok()
    }

    pub fn value_type(&self) -> Option<ValueType> {
        self.values.first().map(Value::value_type)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UseAttrDecl {
    pub name: String,
    pub domain: Domain,
    pub initial: Value,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConfigError {
    #[error("duplicate entity id '{0}'")]
    DuplicateEntityId(String),
    #[error("attribute '{attr}' references unknown entity '{id}'")]
    DanglingReference { attr: String, id: String },
    #[error("invalid entity id '{0}'")]
    InvalidId(String),
    #[error("attribute '{attr}' of entity '{entity}' is reserved")]
    ReservedAttribute { entity: String, attr: String },
    #[error("attribute '{attr}' is used with both {first} and {second} values")]
    AttributeTypeConflict {
        attr: String,
        first: ValueType,
        second: ValueType,
    },
    #[error("use attribute '{0}' is declared twice")]
    DuplicateUseAttr(String),
    #[error("use attribute name '{0}' is reserved")]
    ReservedUseAttr(String),
    #[error("domain of use attribute '{0}' is empty")]
    EmptyDomain(String),
    #[error("domain of use attribute '{0}' mixes value types")]
    MixedDomain(String),
    #[error("initial value of use attribute '{0}' lies outside its domain")]
    InitialOutsideDomain(String),
    #[error("candidate universe of {0} uses is too large")]
    TooManyCandidates(usize),
    #[error("policy: {0}")]
    Policy(#[from] PolicyError),
    #[error("update procedure {proc}: {source}")]
    Update {
        proc: UpdateProc,
        source: PolicyError,
    },
}

/// Entity description prior to resolution.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EntitySpec {
    pub kind: EntityKind,
    pub id: String,
    pub attrs: Vec<(String, RawValue)>,
}

impl EntitySpec {
    pub fn new(kind: EntityKind, id: impl Into<String>) -> Self {
        EntitySpec {
            kind,
            id: id.into(),
            attrs: Vec::new(),
        }
    }

    pub fn with(mut self, name: impl Into<String>, value: impl Into<RawValue>) -> Self {
        self.attrs.push((name.into(), value.into()));
        self
    }
}

#[derive(Debug, Clone)]
struct UseAttrSpec {
    name: String,
    domain: Vec<RawValue>,
    initial: Option<RawValue>,
}

#[derive(Debug, Clone)]
enum PolicySource {
    Text(String),
    Rule(PolicyRule),
}

/// Number of subjects, actions and objects of a generated system.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct UseCounts {
    pub subjects: usize,
    pub actions: usize,
    pub objects: usize,
}

impl UseCounts {
    /// One subject, one action and `n` objects.
    pub fn uses(n: usize) -> Self {
        UseCounts {
            subjects: 1,
            actions: 1,
            objects: n,
        }
    }

    pub fn candidates(&self) -> usize {
        self.subjects * self.actions * self.objects
    }
}

/// Collects entities, attributes, policy and updates and validates them into
/// a [`SystemConfig`].
#[derive(Debug, Clone)]
pub struct SystemBuilder {
    model: ModelKind,
    entities: Vec<EntitySpec>,
    use_attrs: Vec<UseAttrSpec>,
    policy: PolicySource,
    updates: Vec<(UpdateProc, String)>,
    tick_bound: u64,
    choose: ChooseMode,
}

impl SystemBuilder {
    pub fn new(model: ModelKind) -> Self {
        SystemBuilder {
            model,
            entities: Vec::new(),
            use_attrs: Vec::new(),
            policy: PolicySource::Rule(PolicyRule::Const(true)),
            updates: Vec::new(),
            tick_bound: DEFAULT_TICK_BOUND,
            choose: ChooseMode::default(),
        }
    }

    /// Entities `s1..`, `a1..`, `o1..` with integer attributes `num` (the
    /// ordinal) and `parity` (`num mod 2`). Ordinals are zero-padded so that
    /// id order matches numeric order.
    pub fn generated(model: ModelKind, counts: UseCounts) -> Self {
        let mut b = SystemBuilder::new(model);
        for (kind, prefix, count) in [
            (EntityKind::Subject, "s", counts.subjects),
            (EntityKind::Action, "a", counts.actions),
            (EntityKind::Object, "o", counts.objects),
        ] {
            let width = count.to_string().len();
            for i in 1..=count {
                b = b.entity(
                    EntitySpec::new(kind, format!("{prefix}{i:0width$}"))
                        .with("num", i as i64)
                        .with("parity", (i % 2) as i64),
                );
            }
        }
        b
    }

    pub fn model(mut self, model: ModelKind) -> Self {
        self.model = model;
        self
    }

    pub fn entity(mut self, spec: EntitySpec) -> Self {
        self.entities.push(spec);
        self
    }

    pub fn use_attr(
        mut self,
        name: impl Into<String>,
        domain: Vec<RawValue>,
        initial: Option<RawValue>,
    ) -> Self {
        self.use_attrs.push(UseAttrSpec {
            name: name.into(),
            domain,
            initial,
        });
        self
    }

    pub fn policy_text(mut self, text: impl Into<String>) -> Self {
        self.policy = PolicySource::Text(text.into());
        self
    }

    pub fn policy(mut self, rule: PolicyRule) -> Self {
        self.policy = PolicySource::Rule(rule);
        self
    }

    /// Update procedure body, e.g. `st=completed, allowedtime=tick`.
    pub fn update(mut self, proc: UpdateProc, body: impl Into<String>) -> Self {
        self.updates.push((proc, body.into()));
        self
    }

    pub fn tick_bound(mut self, bound: u64) -> Self {
        self.tick_bound = bound;
        self
    }

    pub fn choose_mode(mut self, mode: ChooseMode) -> Self {
        self.choose = mode;
        self
    }

    pub fn build(self) -> Result<SystemConfig, ConfigError> {
        let mut specs = self.entities;
        for spec in &specs {
            if !valid_id(&spec.id) {
                return Err(ConfigError::InvalidId(spec.id.clone()));
            }
        }
        specs.sort_by(|a, b| a.id.cmp(&b.id));
        for pair in specs.windows(2) {
            if pair[0].id == pair[1].id {
                return Err(ConfigError::DuplicateEntityId(pair[0].id.clone()));
            }
        }
        let by_name: HashMap<String, EntityId> = specs
            .iter()
            .enumerate()
            .map(|(i, s)| (s.id.clone(), EntityId(i as u32)))
            .collect();
        let resolve = |attr: &str, raw: &RawValue| -> Result<Value, ConfigError> {
            let lookup = |id: &str| {
                by_name
                    .get(id)
                    .copied()
                    .ok_or_else(|| ConfigError::DanglingReference {
                        attr: attr.to_string(),
                        id: id.to_string(),
                    })
            };
            Ok(match raw {
                RawValue::Int(i) => Value::Int(*i),
                RawValue::Token(t) => Value::token(t),
                RawValue::IdRef(id) => Value::Id(lookup(id)?),
                RawValue::IdTuple(ids) => Value::IdTuple(
                    ids.iter()
                        .map(|id| lookup(id))
                        .collect::<Result<Vec<_>, _>>()?
                        .into(),
                ),
            })
        };

        let mut entities = Vec::with_capacity(specs.len());
        let mut by_kind: [Vec<EntityId>; 3] = Default::default();
        let mut kind_attr_types: [BTreeMap<String, ValueType>; 3] = Default::default();
        let mut all_attr_types: BTreeMap<String, ValueType> = BTreeMap::new();
        for (i, spec) in specs.iter().enumerate() {
            let id = EntityId(i as u32);
            let mut attrs = BTreeMap::new();
            attrs.insert("id".to_string(), Value::Id(id));
            for (name, raw) in &spec.attrs {
                if name == "id" {
                    return Err(ConfigError::ReservedAttribute {
                        entity: spec.id.clone(),
                        attr: name.clone(),
                    });
                }
                let v = resolve(name, raw)?;
                let k = kind_index(spec.kind);
                for table in [&mut kind_attr_types[k], &mut all_attr_types] {
                    let t = *table.entry(name.clone()).or_insert(v.value_type());
                    if t != v.value_type() {
                        return Err(ConfigError::AttributeTypeConflict {
                            attr: name.clone(),
                            first: t,
                            second: v.value_type(),
                        });
                    }
                }
                attrs.insert(name.clone(), v);
            }
            by_kind[kind_index(spec.kind)].push(id);
            entities.push(Entity {
                kind: spec.kind,
                id,
                name: spec.id.clone(),
                attrs,
            });
        }
        let mut kind_pos = vec![0u32; entities.len()];
        for ids in &by_kind {
            for (pos, id) in ids.iter().enumerate() {
                kind_pos[id.index()] = pos as u32;
            }
        }

        let mut use_attrs: Vec<UseAttrDecl> = Vec::new();
        for spec in &self.use_attrs {
            if matches!(spec.name.as_str(), "sid" | "aid" | "oid" | "st" | "id") {
                return Err(ConfigError::ReservedUseAttr(spec.name.clone()));
            }
            if use_attrs.iter().any(|d| d.name == spec.name) {
                return Err(ConfigError::DuplicateUseAttr(spec.name.clone()));
            }
            let mut values = spec
                .domain
                .iter()
                .map(|raw| resolve(&spec.name, raw))
                .collect::<Result<Vec<_>, _>>()?;
            if values.is_empty() {
                return Err(ConfigError::EmptyDomain(spec.name.clone()));
            }
            let t = values[0].value_type();
            if values.iter().any(|v| v.value_type() != t) {
                return Err(ConfigError::MixedDomain(spec.name.clone()));
            }
            values.sort_by(|a, b| a.canonical_cmp(b));
            values.dedup();
            let domain = Domain { values };
            let initial = match &spec.initial {
                Some(raw) => resolve(&spec.name, raw)?,
                None => domain.values[0].clone(),
            };
            if !domain.contains(&initial) {
                return Err(ConfigError::InitialOutsideDomain(spec.name.clone()));
            }
            use_attrs.push(UseAttrDecl {
                name: spec.name.clone(),
                domain,
                initial,
            });
        }
        use_attrs.sort_by(|a, b| a.name.cmp(&b.name));

        let n_candidates = by_kind[0].len() * by_kind[1].len() * by_kind[2].len();
        if n_candidates > MAX_CANDIDATES {
            return Err(ConfigError::TooManyCandidates(n_candidates));
        }
        let mut candidates = Vec::with_capacity(n_candidates);
        for &sid in &by_kind[kind_index(EntityKind::Subject)] {
            for &aid in &by_kind[kind_index(EntityKind::Action)] {
                for &oid in &by_kind[kind_index(EntityKind::Object)] {
                    candidates.push(UseKey { sid, aid, oid });
                }
            }
        }

        let mut config = SystemConfig {
            inner: Arc::new(Inner {
                model: self.model,
                entities,
                by_name,
                by_kind,
                kind_pos,
                kind_attr_types,
                all_attr_types,
                use_attrs,
                candidates,
                policy: PolicyRule::Const(true),
                updates: UpdateProc::ALL
                    .into_iter()
                    .map(|p| (p, UpdateSpec::plain(p.default_target())))
                    .collect(),
                tick_dependent: false,
                tick_bound: self.tick_bound,
                choose: self.choose,
            }),
        };

        let rule = match self.policy {
            PolicySource::Text(text) => policy::parse_policy(&text, &config)?,
            PolicySource::Rule(rule) => policy::check_rule(rule, &config)?,
        };
        let mut updates = config.inner.updates.clone();
        for (proc, body) in &self.updates {
            let spec = policy::parse_update(body, *proc, &config).map_err(|source| {
                ConfigError::Update {
                    proc: *proc,
                    source,
                }
            })?;
            updates.insert(*proc, spec);
        }
        let inner = Arc::make_mut(&mut config.inner);
        inner.tick_dependent = updates.values().any(UpdateSpec::reads_tick);
        inner.policy = rule;
        inner.updates = updates;
        Ok(config)
    }
}

fn valid_id(id: &str) -> bool {
    !id.is_empty()
        && id
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.'))
}

fn kind_index(kind: EntityKind) -> usize {
    match kind {
        EntityKind::Subject => 0,
        EntityKind::Object => 1,
        EntityKind::Action => 2,
    }
}

#[derive(Debug, Clone)]
struct Inner {
    model: ModelKind,
    entities: Vec<Entity>,
    by_name: HashMap<String, EntityId>,
    by_kind: [Vec<EntityId>; 3],
    kind_pos: Vec<u32>,
    kind_attr_types: [BTreeMap<String, ValueType>; 3],
    all_attr_types: BTreeMap<String, ValueType>,
    use_attrs: Vec<UseAttrDecl>,
    candidates: Vec<UseKey>,
    policy: PolicyRule,
    updates: BTreeMap<UpdateProc, UpdateSpec>,
    tick_dependent: bool,
    tick_bound: u64,
    choose: ChooseMode,
}

/// A validated, immutable system. Cheap to clone.
#[derive(Debug, Clone)]
pub struct SystemConfig {
    inner: Arc<Inner>,
}

impl SystemConfig {
    pub fn model(&self) -> ModelKind {
        self.inner.model
    }

    pub fn entities(&self) -> &[Entity] {
        &self.inner.entities
    }

    pub fn entity(&self, id: EntityId) -> &Entity {
        &self.inner.entities[id.index()]
    }

    pub fn entity_by_name(&self, name: &str) -> Option<EntityId> {
        self.inner.by_name.get(name).copied()
    }

    pub fn entity_name(&self, id: EntityId) -> &str {
        &self.inner.entities[id.index()].name
    }

    pub fn entities_of(&self, kind: EntityKind) -> &[EntityId] {
        &self.inner.by_kind[kind_index(kind)]
    }

    pub fn is_kind(&self, id: EntityId, kind: EntityKind) -> bool {
        self.inner
            .entities
            .get(id.index())
            .is_some_and(|e| e.kind == kind)
    }

    pub fn use_attrs(&self) -> &[UseAttrDecl] {
        &self.inner.use_attrs
    }

    pub fn use_attr_index(&self, name: &str) -> Option<usize> {
        self.inner
            .use_attrs
            .binary_search_by(|d| d.name.as_str().cmp(name))
            .ok()
    }

    /// Type of a direct-entity attribute for entities of `kind`, or of any
    /// entity when `kind` is `None`.
    pub fn entity_attr_type(&self, kind: Option<EntityKind>, name: &str) -> Option<ValueType> {
        if name == "id" {
            return Some(ValueType::Id);
        }
        match kind {
            Some(k) => self.inner.kind_attr_types[kind_index(k)].get(name).copied(),
            None => self.inner.all_attr_types.get(name).copied(),
        }
    }

    pub fn use_field_type(&self, name: &str) -> Option<ValueType> {
        match name {
            "sid" | "aid" | "oid" => Some(ValueType::Id),
            "st" => Some(ValueType::Token),
            _ => self
                .use_attr_index(name)
                .and_then(|i| self.inner.use_attrs[i].domain.value_type()),
        }
    }

    /// Request candidates `S × A × O` in lexicographic `(sid, aid, oid)` order.
    pub fn candidates(&self) -> &[UseKey] {
        &self.inner.candidates
    }

    /// Position of a key in [`candidates`](Self::candidates).
    pub fn slot_of(&self, key: &UseKey) -> Option<usize> {
        let inner = &*self.inner;
        if !self.is_kind(key.sid, EntityKind::Subject)
            || !self.is_kind(key.aid, EntityKind::Action)
            || !self.is_kind(key.oid, EntityKind::Object)
        {
            return None;
        }
        let na = inner.by_kind[kind_index(EntityKind::Action)].len();
        let no = inner.by_kind[kind_index(EntityKind::Object)].len();
        let s = inner.kind_pos[key.sid.index()] as usize;
        let a = inner.kind_pos[key.aid.index()] as usize;
        let o = inner.kind_pos[key.oid.index()] as usize;
        Some((s * na + a) * no + o)
    }

    pub fn policy(&self) -> &PolicyRule {
        &self.inner.policy
    }

    /// Same system with a different (already checked) policy.
    pub fn with_policy(&self, rule: PolicyRule) -> Result<SystemConfig, ConfigError> {
        let rule = policy::check_rule(rule, self)?;
        let mut next = self.clone();
        Arc::make_mut(&mut next.inner).policy = rule;
        Ok(next)
    }

    pub fn with_model(&self, model: ModelKind) -> SystemConfig {
        let mut next = self.clone();
        Arc::make_mut(&mut next.inner).model = model;
        next
    }

    pub fn update(&self, proc: UpdateProc) -> &UpdateSpec {
        &self.inner.updates[&proc]
    }

    pub fn updates(&self) -> &BTreeMap<UpdateProc, UpdateSpec> {
        &self.inner.updates
    }

    /// Whether the logical clock is part of state identity.
    pub fn tick_dependent(&self) -> bool {
        self.inner.tick_dependent
    }

    pub fn tick_bound(&self) -> u64 {
        self.inner.tick_bound
    }

    pub fn choose_mode(&self) -> ChooseMode {
        self.inner.choose
    }

    /// The use created by `Request` for `key`.
    pub fn create_use(&self, key: UseKey) -> Use {
        Use {
            key,
            st: UseStatus::Requested,
            attrs: self
                .inner
                .use_attrs
                .iter()
                .map(|d| d.initial.clone())
                .collect(),
        }
    }

    pub fn display_value(&self, v: &Value) -> String {
        match v {
            Value::Int(i) => i.to_string(),
            Value::Token(t) => format!("{t:?}"),
            Value::Id(id) => self.entity_name(*id).to_string(),
            Value::IdTuple(ids) => {
                let names: Vec<&str> = ids.iter().map(|id| self.entity_name(*id)).collect();
                format!("<{}>", names.join(","))
            }
        }
    }

    /// `sid,aid,oid` with textual ids.
    pub fn display_key(&self, key: &UseKey) -> String {
        format!(
            "{},{},{}",
            self.entity_name(key.sid),
            self.entity_name(key.aid),
            self.entity_name(key.oid)
        )
    }

    pub fn display_world(&self, w: &World) -> String {
        let mut out = String::from("{");
        for (i, u) in w.uses.iter().enumerate() {
            if i > 0 {
                out.push_str(", ");
            }
            out.push_str(&format!("({}):{}", self.display_key(&u.key), u.st));
            for (decl, v) in self.inner.use_attrs.iter().zip(&u.attrs) {
                out.push_str(&format!(" {}={}", decl.name, self.display_value(v)));
            }
        }
        out.push('}');
        if self.inner.tick_dependent {
            out.push_str(&format!(" tick={}", w.tick));
        }
        out
    }
}

/// `U ⊆ Uses`: every use references entities of the right kinds and every
/// declared attribute holds a value of its domain.
pub fn type_correctness(world: &World, config: &SystemConfig) -> bool {
    let decls = config.use_attrs();
    world.uses.iter().all(|u| {
        config.is_kind(u.key.sid, EntityKind::Subject)
            && config.is_kind(u.key.aid, EntityKind::Action)
            && config.is_kind(u.key.oid, EntityKind::Object)
            && u.attrs.len() == decls.len()
            && decls
                .iter()
                .zip(&u.attrs)
                .all(|(d, v)| d.domain.contains(v))
    })
}

/// The map `(sid, aid, oid) → use` is injective.
pub fn key_uniqueness(world: &World) -> bool {
    let mut keys: Vec<&UseKey> = world.uses.iter().map(|u| &u.key).collect();
    keys.sort();
    keys.windows(2).all(|w| w[0] != w[1])
}
