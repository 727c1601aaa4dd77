"""
测试套件：零膨胀Beta-Frank Copula依赖网络系统

包含单元测试、属性测试和集成测试
"""
