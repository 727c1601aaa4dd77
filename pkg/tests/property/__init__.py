"""基于属性的测试模块"""
