//! Tool registry, manipulation safety checks, and the simulated household
//! the tool agents act on.

mod registry;
mod validate;
mod world;

pub use registry::{
    builtin_specs, ArgValue, Command, OpSpec, ParamSpec, ParamType, RegistryError, SchemaError, ToolRegistry, ToolSpec,
    IOT, MANDATORY_TOOLS, MANIPULATION, NAVIGATION, SPEAKER, WEB,
};
pub use validate::{default_deny_list, validate_manipulation, RejectReason, Rejection};
pub use world::{
    Device, DeviceDef, Disturbance, Impossible, Location, Mutation, ObjectDef, OutputLine, Robot, WorldDef, WorldError,
    WorldObject, WorldState, GRASP_TICKS, HAND_CAPACITY, HOP_TICKS, PHOTO_TICKS, PLACE_TICKS,
};
